//! Scalar expressions for model definitions.
//!
//! Expressions are parsed once into an [`Expr`] tree and then bound to a
//! positional variable list (e.g. `x1..xn, u1..um`) plus named constants,
//! producing a [`Compiled`] expression that evaluates on any [`Scalar`]:
//! plain reals or nested duals.
//!
//! Precedence, tightest first: `^` (right-associative), unary minus,
//! `* /`, `+ -`. Functions: `sqrt exp log sin cos abs`. There is no
//! implicit multiplication.

mod parse;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

use crate::autodiff::{AdError, Scalar};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unbound name `{0}`")]
    Unbound(String),
    #[error("domain violation in {op} (argument {value}) while evaluating `{expr}`")]
    Domain {
        op: &'static str,
        value: f64,
        expr: String,
    },
    #[error("expression expects {expected} variables, got {got}")]
    Arity { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sqrt,
    Exp,
    Log,
    Sin,
    Cos,
    Abs,
}

impl Func {
    pub const ALL: [Func; 6] = [
        Func::Sqrt,
        Func::Exp,
        Func::Log,
        Func::Sin,
        Func::Cos,
        Func::Abs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sqrt => "sqrt",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Abs => "abs",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }

    fn apply<T: Scalar>(self, x: &T) -> Result<T, AdError> {
        match self {
            Func::Sqrt => x.try_sqrt(),
            Func::Exp => Ok(x.exp()),
            Func::Log => x.try_ln(),
            Func::Sin => Ok(x.sin()),
            Func::Cos => Ok(x.cos()),
            Func::Abs => Ok(x.abs()),
        }
    }
}

/// Parsed expression tree. Names are resolved only when binding.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(String),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr, ExprError> {
        parse::parse(src)
    }

    /// Every free name in the tree.
    pub fn names(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_names(&mut out);
        out
    }

    fn collect_names(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(n) => {
                out.insert(n.clone());
            }
            Expr::Neg(e) | Expr::Call(_, e) => e.collect_names(out),
            Expr::Binary(_, a, b) => {
                a.collect_names(out);
                b.collect_names(out);
            }
        }
    }

    /// Replace every occurrence of the name `var` by `with`.
    pub fn substitute(&self, var: &str, with: &Expr) -> Expr {
        match self {
            Expr::Var(n) if n == var => with.clone(),
            Expr::Num(_) | Expr::Var(_) => self.clone(),
            Expr::Neg(e) => Expr::Neg(Box::new(e.substitute(var, with))),
            Expr::Call(f, e) => Expr::Call(*f, Box::new(e.substitute(var, with))),
            Expr::Binary(op, a, b) => Expr::Binary(
                *op,
                Box::new(a.substitute(var, with)),
                Box::new(b.substitute(var, with)),
            ),
        }
    }

    /// Bind names: entries of `vars` become positional inputs, entries of
    /// `params` become constants. Any other name is an error.
    pub fn compile(
        &self,
        vars: &[&str],
        params: &BTreeMap<String, f64>,
    ) -> Result<Compiled, ExprError> {
        let root = lower(self, vars, params)?;
        Ok(Compiled {
            root,
            arity: vars.len(),
            source: self.to_string(),
        })
    }

    /// Evaluate with a name-to-value map (reals or duals).
    pub fn eval<T: Scalar>(&self, bindings: &HashMap<String, T>) -> Result<T, ExprError> {
        let names: Vec<&str> = bindings.keys().map(String::as_str).collect();
        let compiled = self.compile(&names, &BTreeMap::new())?;
        let values: Vec<T> = names.iter().map(|n| bindings[*n].clone()).collect();
        compiled.eval(&values)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Var(n) => f.write_str(n),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Binary(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            Expr::Call(func, e) => write!(f, "{}({e})", func.name()),
        }
    }
}

#[derive(Debug, Clone)]
enum Node {
    Const(f64),
    Var(usize),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    PowI(Box<Node>, i32),
    Pow(Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

fn lower(e: &Expr, vars: &[&str], params: &BTreeMap<String, f64>) -> Result<Node, ExprError> {
    let node = match e {
        Expr::Num(v) => Node::Const(*v),
        Expr::Var(name) => {
            if let Some(i) = vars.iter().position(|v| v == name) {
                Node::Var(i)
            } else if let Some(v) = params.get(name) {
                Node::Const(*v)
            } else {
                return Err(ExprError::Unbound(name.clone()));
            }
        }
        Expr::Neg(a) => Node::Neg(Box::new(lower(a, vars, params)?)),
        Expr::Call(f, a) => Node::Call(*f, Box::new(lower(a, vars, params)?)),
        Expr::Binary(op, a, b) => {
            let (a, b) = (
                Box::new(lower(a, vars, params)?),
                Box::new(lower(b, vars, params)?),
            );
            match op {
                BinOp::Add => Node::Add(a, b),
                BinOp::Sub => Node::Sub(a, b),
                BinOp::Mul => Node::Mul(a, b),
                BinOp::Div => Node::Div(a, b),
                BinOp::Pow => match const_value(&b) {
                    Some(k) if k.fract() == 0.0 && k.abs() <= i32::MAX as f64 => {
                        Node::PowI(a, k as i32)
                    }
                    _ => Node::Pow(a, b),
                },
            }
        }
    };
    Ok(fold(node))
}

/// Value of a variable-free subtree, if it evaluates cleanly.
fn const_value(n: &Node) -> Option<f64> {
    if has_var(n) {
        return None;
    }
    eval_node::<f64>(n, &[]).ok().filter(|v| v.is_finite())
}

fn has_var(n: &Node) -> bool {
    match n {
        Node::Const(_) => false,
        Node::Var(_) => true,
        Node::Neg(a) | Node::PowI(a, _) | Node::Call(_, a) => has_var(a),
        Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) | Node::Pow(a, b) => {
            has_var(a) || has_var(b)
        }
    }
}

fn fold(n: Node) -> Node {
    if matches!(n, Node::Const(_)) {
        return n;
    }
    match const_value(&n) {
        Some(v) => Node::Const(v),
        None => n,
    }
}

fn eval_node<T: Scalar>(n: &Node, x: &[T]) -> Result<T, AdError> {
    Ok(match n {
        Node::Const(v) => T::constant(*v),
        Node::Var(i) => x[*i].clone(),
        Node::Neg(a) => -eval_node(a, x)?,
        Node::Add(a, b) => eval_node(a, x)? + eval_node(b, x)?,
        Node::Sub(a, b) => eval_node(a, x)? - eval_node(b, x)?,
        Node::Mul(a, b) => {
            // constant factors scale without touching partials twice
            match (a.as_ref(), b.as_ref()) {
                (Node::Const(k), other) | (other, Node::Const(k)) => eval_node(other, x)?.scale(*k),
                _ => eval_node(a, x)? * eval_node(b, x)?,
            }
        }
        Node::Div(a, b) => {
            let num = eval_node(a, x)?;
            match b.as_ref() {
                Node::Const(k) if *k != 0.0 => num.scale(1.0 / k),
                _ => num.try_div(&eval_node(b, x)?)?,
            }
        }
        Node::PowI(a, k) => eval_node(a, x)?.try_powi(*k)?,
        Node::Pow(a, b) => eval_node(a, x)?.try_powf(&eval_node(b, x)?)?,
        Node::Call(f, a) => f.apply(&eval_node(a, x)?)?,
    })
}

/// Expression bound to a positional variable list.
#[derive(Debug, Clone)]
pub struct Compiled {
    root: Node,
    arity: usize,
    source: String,
}

impl Compiled {
    /// Parse and bind in one go.
    pub fn new(
        src: &str,
        vars: &[&str],
        params: &BTreeMap<String, f64>,
    ) -> Result<Compiled, ExprError> {
        Expr::parse(src)?.compile(vars, params)
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// True when the expression does not depend on any variable.
    pub fn is_constant(&self) -> bool {
        !has_var(&self.root)
    }

    pub fn eval<T: Scalar>(&self, x: &[T]) -> Result<T, ExprError> {
        if x.len() != self.arity {
            return Err(ExprError::Arity {
                expected: self.arity,
                got: x.len(),
            });
        }
        eval_node(&self.root, x).map_err(|e| match e {
            AdError::Domain { op, value } => ExprError::Domain {
                op,
                value,
                expr: self.source.clone(),
            },
            other => ExprError::Domain {
                op: "eval",
                value: f64::NAN,
                expr: format!("{other}"),
            },
        })
    }
}
