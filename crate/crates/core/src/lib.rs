#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod central_field;
pub mod config;
pub mod dofcount;
pub mod dynamics;
pub mod expr;
pub mod geometry;
pub mod hamiltonize;
pub mod toy_models;
