//! Legendre transform, Poisson bivector, Hamiltonian and drift of a
//! constrained extremum problem in normal form.
//!
//! With the closed basis `Z_ᾱ` and structure functions `U`, `V`, the phase
//! space is `(x^i, p_ᾱ)` with
//!
//! ```text
//! {x^i, x^j} = 0,   {x^i, p_ᾱ} = Z^i_ᾱ,   {p_ᾱ, p_β̄} = −U^γ̄_ᾱβ̄ p_γ̄
//! H(x, p) = p_α ū^α − L(x, ū),            𝐕 = V^i ∂_i − V^β̄_ᾱ p_β̄ ∂/∂p_ᾱ
//! ```
//!
//! and the equations of motion are `ż = Π∇H + 𝐕`.

mod checks;
mod hamiltonian;
mod legendre;
mod system;

use thiserror::Error;

use crate::expr::ExprError;
use crate::geometry::GeomError;

pub use checks::{
    antisymmetry_defect, bracket_with_hamiltonian, check_hamiltonian_drift, drift_compatibility,
    eval_scalar, hamiltonian_drift_defect, hamiltonian_vector_field, jacobi_residual,
    poisson_bracket,
};
pub use hamiltonian::{
    canonical_defect, canonical_to_momenta, canonicalize_pure_gauge, momenta_to_canonical, Form,
    HamiltonianSystem,
};
pub use legendre::{legendre, min_hessian_det, LEGENDRE_TOL, MAX_NEWTON};
pub use system::{ControlSystem, LagrangianJet};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HamError {
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("{0}")]
    Invalid(String),
    #[error("singular Hessian ∂²L/∂u∂u at x = {x:?}, u = {u:?} (det = {det:e})")]
    SingularHessian { x: Vec<f64>, u: Vec<f64>, det: f64 },
    #[error(
        "Legendre inversion did not converge at x = {x:?} (last u = {u:?}, residual {residual:e})"
    )]
    NoConvergence {
        x: Vec<f64>,
        u: Vec<f64>,
        residual: f64,
    },
    #[error("closure has {m_bar} fields in dimension {n}; not pure gauge")]
    NotPureGauge { m_bar: usize, n: usize },
    #[error("distribution is not closed: bracket residual {residual:e} exceeds {tol:e}")]
    NotClosed { residual: f64, tol: f64 },
}
