//! Vector fields, Lie brackets and the closure of a distribution.
//!
//! Every map is evaluable on the scalar tower `f64 → D1 → D2 → D3`. The
//! Jacobian of a map at level `T` is obtained by one evaluation at the next
//! level up, so a bracket evaluated on plain reals differentiates its
//! arguments exactly, a bracket of a bracket still does, and so on up to
//! three nested brackets. Past that the Jacobian at `D3` falls back to
//! central differences.

mod closure;
pub mod linalg;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::autodiff::{Dual, Scalar, D1, D2, D3};
use crate::expr::{Compiled, ExprError};

pub use closure::{
    close_distribution, halton_samples, jacobi_consequences_at, structure_functions_at,
    ClosureOptions, ClosureResult, Distribution, GenerationRecord, Structure,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeomError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("evaluating {what} at {point:?}: {source}")]
    Eval {
        what: String,
        point: Vec<f64>,
        source: ExprError,
    },
    #[error("basis is rank deficient at {point:?} (sigma_min/sigma_max = {ratio:e}) after adding {field}")]
    Degenerate {
        point: Vec<f64>,
        ratio: f64,
        field: String,
    },
    #[error("closure did not stabilise within {sweeps} sweeps; current basis: {basis:?}")]
    IterationCap { sweeps: usize, basis: Vec<String> },
    #[error("least-squares system is singular")]
    Singular,
}

/// A smooth map `R^in → R^out` evaluable on every level of the scalar tower.
pub trait MapFn: Send + Sync + fmt::Debug {
    fn in_dim(&self) -> usize;
    fn out_dim(&self) -> usize;
    fn eval_f64(&self, x: &[f64]) -> Result<Vec<f64>, GeomError>;
    fn eval_d1(&self, x: &[D1]) -> Result<Vec<D1>, GeomError>;
    fn eval_d2(&self, x: &[D2]) -> Result<Vec<D2>, GeomError>;
    fn eval_d3(&self, x: &[D3]) -> Result<Vec<D3>, GeomError>;
}

/// Implements the four `MapFn::eval_*` methods by forwarding to an inherent
/// `fn eval_at<T: Level>(&self, x: &[T]) -> Result<Vec<T>, GeomError>`.
#[macro_export]
macro_rules! forward_levels {
    () => {
        fn eval_f64(&self, x: &[f64]) -> Result<Vec<f64>, $crate::geometry::GeomError> {
            self.eval_at(x)
        }
        fn eval_d1(
            &self,
            x: &[$crate::autodiff::D1],
        ) -> Result<Vec<$crate::autodiff::D1>, $crate::geometry::GeomError> {
            self.eval_at(x)
        }
        fn eval_d2(
            &self,
            x: &[$crate::autodiff::D2],
        ) -> Result<Vec<$crate::autodiff::D2>, $crate::geometry::GeomError> {
            self.eval_at(x)
        }
        fn eval_d3(
            &self,
            x: &[$crate::autodiff::D3],
        ) -> Result<Vec<$crate::autodiff::D3>, $crate::geometry::GeomError> {
            self.eval_at(x)
        }
    };
}

/// A rung of the scalar tower: knows how to evaluate a map and its Jacobian.
pub trait Level: Scalar {
    fn eval(f: &dyn MapFn, x: &[Self]) -> Result<Vec<Self>, GeomError>;

    /// Values and Jacobian `J[i][j] = ∂_j f^i`.
    #[allow(clippy::type_complexity)]
    fn jacobian(f: &dyn MapFn, x: &[Self]) -> Result<(Vec<Self>, Vec<Vec<Self>>), GeomError>;
}

fn split<T: Scalar>(y: Vec<Dual<T>>, n: usize) -> (Vec<T>, Vec<Vec<T>>) {
    let mut values = Vec::with_capacity(y.len());
    let mut jac = Vec::with_capacity(y.len());
    for yi in y {
        jac.push((0..n).map(|j| yi.partial(j)).collect());
        values.push(yi.value);
    }
    (values, jac)
}

impl Level for f64 {
    fn eval(f: &dyn MapFn, x: &[f64]) -> Result<Vec<f64>, GeomError> {
        f.eval_f64(x)
    }
    fn jacobian(f: &dyn MapFn, x: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>), GeomError> {
        Ok(split(f.eval_d1(&Dual::variables(x))?, x.len()))
    }
}

impl Level for D1 {
    fn eval(f: &dyn MapFn, x: &[D1]) -> Result<Vec<D1>, GeomError> {
        f.eval_d1(x)
    }
    fn jacobian(f: &dyn MapFn, x: &[D1]) -> Result<(Vec<D1>, Vec<Vec<D1>>), GeomError> {
        Ok(split(f.eval_d2(&Dual::variables(x))?, x.len()))
    }
}

impl Level for D2 {
    fn eval(f: &dyn MapFn, x: &[D2]) -> Result<Vec<D2>, GeomError> {
        f.eval_d2(x)
    }
    fn jacobian(f: &dyn MapFn, x: &[D2]) -> Result<(Vec<D2>, Vec<Vec<D2>>), GeomError> {
        Ok(split(f.eval_d3(&Dual::variables(x))?, x.len()))
    }
}

/// Relative step of the finite-difference fallback at the top of the tower.
pub const FD_STEP: f64 = 1e-5;

impl Level for D3 {
    fn eval(f: &dyn MapFn, x: &[D3]) -> Result<Vec<D3>, GeomError> {
        f.eval_d3(x)
    }
    fn jacobian(f: &dyn MapFn, x: &[D3]) -> Result<(Vec<D3>, Vec<Vec<D3>>), GeomError> {
        let values = f.eval_d3(x)?;
        let norm = x.iter().map(|v| v.re() * v.re()).sum::<f64>().sqrt();
        let h = FD_STEP * norm.max(1.0);
        let mut jac = vec![Vec::with_capacity(x.len()); values.len()];
        for j in 0..x.len() {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[j] = xp[j].clone() + D3::constant(h);
            xm[j] = xm[j].clone() - D3::constant(h);
            let (fp, fm) = (f.eval_d3(&xp)?, f.eval_d3(&xm)?);
            for (row, (a, b)) in jac.iter_mut().zip(fp.into_iter().zip(fm)) {
                row.push((a - b).scale(0.5 / h));
            }
        }
        Ok((values, jac))
    }
}

fn reals<T: Scalar>(x: &[T]) -> Vec<f64> {
    x.iter().map(Scalar::re).collect()
}

/// Map whose components are compiled expressions.
#[derive(Debug, Clone)]
pub struct ExprMap {
    name: String,
    in_dim: usize,
    components: Vec<Compiled>,
}

impl ExprMap {
    /// Compile `sources` against the positional names `vars`.
    pub fn new(
        name: impl Into<String>,
        sources: &[impl AsRef<str>],
        vars: &[&str],
        params: &BTreeMap<String, f64>,
    ) -> Result<Self, ExprError> {
        let components = sources
            .iter()
            .map(|s| Compiled::new(s.as_ref(), vars, params))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            name: name.into(),
            in_dim: vars.len(),
            components,
        })
    }

    pub fn components(&self) -> &[Compiled] {
        &self.components
    }

    fn eval_at<T: Level>(&self, x: &[T]) -> Result<Vec<T>, GeomError> {
        if x.len() != self.in_dim {
            return Err(GeomError::Dimension {
                expected: self.in_dim,
                got: x.len(),
            });
        }
        self.components
            .iter()
            .map(|c| c.eval(x))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|source| GeomError::Eval {
                what: self.name.clone(),
                point: reals(x),
                source,
            })
    }
}

impl MapFn for ExprMap {
    fn in_dim(&self) -> usize {
        self.in_dim
    }
    fn out_dim(&self) -> usize {
        self.components.len()
    }
    forward_levels!();
}

/// `[a, b]^i = a^j ∂_j b^i − b^j ∂_j a^i`.
#[derive(Debug, Clone)]
struct BracketMap {
    a: Arc<dyn MapFn>,
    b: Arc<dyn MapFn>,
}

impl BracketMap {
    fn eval_at<T: Level>(&self, x: &[T]) -> Result<Vec<T>, GeomError> {
        let (va, ja) = T::jacobian(self.a.as_ref(), x)?;
        let (vb, jb) = T::jacobian(self.b.as_ref(), x)?;
        Ok(bracket_from_jets(&va, &ja, &vb, &jb))
    }
}

impl MapFn for BracketMap {
    fn in_dim(&self) -> usize {
        self.a.in_dim()
    }
    fn out_dim(&self) -> usize {
        self.a.out_dim()
    }
    forward_levels!();
}

/// Bracket of two fields from their values and Jacobians at one point.
pub fn bracket_from_jets<T: Scalar>(va: &[T], ja: &[Vec<T>], vb: &[T], jb: &[Vec<T>]) -> Vec<T> {
    (0..va.len())
        .map(|i| {
            let mut acc = T::zero();
            for j in 0..va.len() {
                acc = acc + va[j].clone() * jb[i][j].clone() - vb[j].clone() * ja[i][j].clone();
            }
            acc
        })
        .collect()
}

/// Where a basis field came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    User,
    /// `[Z_i, Z_j]` of basis fields `i < j`.
    Bracket(usize, usize),
    /// `[Z_i, V]`.
    DriftBracket(usize),
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::User => f.write_str("user"),
            Provenance::Bracket(i, j) => write!(f, "[Z{}, Z{}]", i + 1, j + 1),
            Provenance::DriftBracket(i) => write!(f, "[Z{}, V]", i + 1),
        }
    }
}

/// Vector field on `R^n`.
#[derive(Debug, Clone)]
pub struct VectorField {
    pub name: String,
    pub provenance: Provenance,
    map: Arc<dyn MapFn>,
}

impl VectorField {
    pub fn new(name: impl Into<String>, map: Arc<dyn MapFn>) -> Result<Self, GeomError> {
        if map.in_dim() != map.out_dim() {
            return Err(GeomError::Dimension {
                expected: map.in_dim(),
                got: map.out_dim(),
            });
        }
        Ok(Self {
            name: name.into(),
            provenance: Provenance::User,
            map,
        })
    }

    /// Field with expression components in `x1..xn`.
    pub fn from_exprs(
        name: impl Into<String>,
        components: &[impl AsRef<str>],
        params: &BTreeMap<String, f64>,
    ) -> Result<Self, ExprError> {
        let name = name.into();
        let vars = coordinate_names("x", components.len());
        let vars: Vec<&str> = vars.iter().map(String::as_str).collect();
        let map = ExprMap::new(name.clone(), components, &vars, params)?;
        Ok(Self {
            name,
            provenance: Provenance::User,
            map: Arc::new(map),
        })
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn dim(&self) -> usize {
        self.map.in_dim()
    }

    pub fn map(&self) -> &Arc<dyn MapFn> {
        &self.map
    }

    pub fn eval<T: Level>(&self, x: &[T]) -> Result<Vec<T>, GeomError> {
        if x.len() != self.dim() {
            return Err(GeomError::Dimension {
                expected: self.dim(),
                got: x.len(),
            });
        }
        T::eval(self.map.as_ref(), x)
    }

    #[allow(clippy::type_complexity)]
    pub fn jacobian<T: Level>(&self, x: &[T]) -> Result<(Vec<T>, Vec<Vec<T>>), GeomError> {
        if x.len() != self.dim() {
            return Err(GeomError::Dimension {
                expected: self.dim(),
                got: x.len(),
            });
        }
        T::jacobian(self.map.as_ref(), x)
    }
}

/// `[X, Y]` as a new field; Jacobians of both arguments come from the next
/// level of the scalar tower whenever the result is evaluated.
pub fn lie_bracket(x: &VectorField, y: &VectorField) -> Result<VectorField, GeomError> {
    if x.dim() != y.dim() {
        return Err(GeomError::Dimension {
            expected: x.dim(),
            got: y.dim(),
        });
    }
    let map = BracketMap {
        a: x.map.clone(),
        b: y.map.clone(),
    };
    Ok(VectorField {
        name: format!("[{}, {}]", x.name, y.name),
        provenance: Provenance::User,
        map: Arc::new(map),
    })
}

/// `prefix1, prefix2, …, prefix{n}`.
pub fn coordinate_names(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    fn central() -> (VectorField, VectorField) {
        let p = params(&[("m", 1.0)]);
        let z = VectorField::from_exprs("Z", &["1", "0", "0"], &p).unwrap();
        let v = VectorField::from_exprs("V", &["0", "x3/(m*x1^2)", "0"], &p).unwrap();
        (z, v)
    }

    #[test]
    fn central_field_brackets() {
        let (z, v) = central();
        let z1 = lie_bracket(&z, &v).unwrap();
        assert_eq!(z1.eval(&[1.0, 0.0, 1.0]).unwrap(), vec![0.0, -2.0, 0.0]);
        let zz1 = lie_bracket(&z, &z1).unwrap();
        let x = [1.0, 0.0, 1.0];
        assert_eq!(zz1.eval(&x).unwrap(), vec![0.0, 6.0, 0.0]);
        let at2 = [2.0, 0.3, 1.0];
        let lhs = zz1.eval(&at2).unwrap();
        let rhs = z1.eval(&at2).unwrap();
        for (a, b) in lhs.iter().zip(&rhs) {
            assert!((a + 1.5 * b).abs() < 1e-15);
        }
        let z1v = lie_bracket(&z1, &v).unwrap();
        assert_eq!(z1v.eval(&x).unwrap(), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn constant_fields_commute() {
        let p = BTreeMap::new();
        let a = VectorField::from_exprs("A", &["1", "2"], &p).unwrap();
        let b = VectorField::from_exprs("B", &["-3", "0.5"], &p).unwrap();
        assert_eq!(
            lie_bracket(&a, &b).unwrap().eval(&[0.4, -1.0]).unwrap(),
            vec![0.0, 0.0]
        );
    }

    #[test]
    fn dimension_mismatch() {
        let p = BTreeMap::new();
        let a = VectorField::from_exprs("A", &["1", "2"], &p).unwrap();
        let b = VectorField::from_exprs("B", &["1", "2", "3"], &p).unwrap();
        assert!(matches!(
            lie_bracket(&a, &b),
            Err(GeomError::Dimension { .. })
        ));
        assert!(matches!(a.eval(&[1.0]), Err(GeomError::Dimension { .. })));
    }

    #[test]
    fn domain_errors_name_the_field() {
        let p = BTreeMap::new();
        let a = VectorField::from_exprs("A", &["log(x1)", "0"], &p).unwrap();
        match a.eval(&[-1.0, 0.0]) {
            Err(GeomError::Eval { what, point, .. }) => {
                assert_eq!(what, "A");
                assert_eq!(point, vec![-1.0, 0.0]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn tower_jacobians_agree_with_fd_fallback() {
        // nested brackets deep enough to reach the finite-difference rung
        let p = BTreeMap::new();
        let a = VectorField::from_exprs("A", &["sin(x2)", "x1^2*x2"], &p).unwrap();
        let b = VectorField::from_exprs("B", &["exp(x1/3)", "cos(x1*x2)"], &p).unwrap();
        let mut f = lie_bracket(&a, &b).unwrap();
        for _ in 0..3 {
            f = lie_bracket(&a, &f).unwrap();
        }
        let x = [0.4, -0.7];
        let v = f.eval(&x).unwrap();
        // oracle: build the same depth by central differences of f64 values
        let h = 1e-4;
        let (_, jac) = f.jacobian(&x).unwrap();
        for j in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[j] += h;
            xm[j] -= h;
            let (fp, fm) = (f.eval(&xp).unwrap(), f.eval(&xm).unwrap());
            for i in 0..2 {
                let fd = (fp[i] - fm[i]) / (2.0 * h);
                assert!(
                    (jac[i][j] - fd).abs() < 1e-5 * (1.0 + fd.abs()),
                    "{i}{j}: {} {fd}",
                    jac[i][j]
                );
            }
        }
        assert!(v.iter().all(|c| c.is_finite()));
    }
}
