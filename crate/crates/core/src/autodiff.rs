//! Forward-mode automatic differentiation.
//!
//! [`Dual<T>`] carries a value together with a dense vector of partial
//! derivatives. The inner type is itself any [`Scalar`], so duals nest:
//! `Dual<Dual<f64>>` yields second derivatives, `Dual<Dual<Dual<f64>>>`
//! third. The geometry pipeline uses the fixed tower [`D1`], [`D2`], [`D3`].
//!
//! An empty partials vector denotes a constant (all partials zero). This
//! keeps literals and parameters cheap inside expressions.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use thiserror::Error;

/// Error raised by checked elementary operations and by seeding.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum AdError {
    #[error("domain violation in {op}: argument {value}")]
    Domain { op: &'static str, value: f64 },
    #[error("active index {index} out of range for a point of dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("active index {0} listed twice")]
    DuplicateIndex(usize),
}

/// Numeric type usable by expressions, vector fields and the linear algebra
/// helpers: `f64` or any nesting of [`Dual`] over it.
pub trait Scalar:
    Clone
    + Debug
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn constant(v: f64) -> Self;
    /// Innermost real value.
    fn re(&self) -> f64;
    /// True when every partial at every nesting level is zero.
    fn is_constant(&self) -> bool;

    fn sqrt(&self) -> Self;
    fn exp(&self) -> Self;
    fn ln(&self) -> Self;
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;
    fn abs(&self) -> Self;
    fn scale(&self, k: f64) -> Self;

    fn zero() -> Self {
        Self::constant(0.0)
    }

    fn one() -> Self {
        Self::constant(1.0)
    }

    fn recip(&self) -> Self {
        Self::one() / self.clone()
    }

    fn square(&self) -> Self {
        self.clone() * self.clone()
    }

    /// Integer power by repeated squaring, so that derivatives are exact
    /// products rather than going through `exp`/`ln`.
    fn powi(&self, n: i32) -> Self {
        let mut base = self.clone();
        let mut k = n.unsigned_abs();
        let mut acc = Self::one();
        while k > 0 {
            if k & 1 == 1 {
                acc = acc * base.clone();
            }
            k >>= 1;
            if k > 0 {
                base = base.square();
            }
        }
        if n < 0 {
            acc.recip()
        } else {
            acc
        }
    }

    fn try_div(&self, rhs: &Self) -> Result<Self, AdError> {
        if rhs.re() == 0.0 {
            return Err(AdError::Domain {
                op: "div",
                value: rhs.re(),
            });
        }
        Ok(self.clone() / rhs.clone())
    }

    fn try_sqrt(&self) -> Result<Self, AdError> {
        let v = self.re();
        if v < 0.0 || (v == 0.0 && !self.is_constant()) || v.is_nan() {
            return Err(AdError::Domain {
                op: "sqrt",
                value: v,
            });
        }
        Ok(self.sqrt())
    }

    fn try_ln(&self) -> Result<Self, AdError> {
        let v = self.re();
        if v <= 0.0 || v.is_nan() {
            return Err(AdError::Domain {
                op: "log",
                value: v,
            });
        }
        Ok(self.ln())
    }

    fn try_powi(&self, n: i32) -> Result<Self, AdError> {
        if n < 0 && self.re() == 0.0 {
            return Err(AdError::Domain {
                op: "pow",
                value: 0.0,
            });
        }
        Ok(self.powi(n))
    }

    /// General power `self^e = exp(e ln self)`; requires a positive base.
    fn try_powf(&self, e: &Self) -> Result<Self, AdError> {
        let v = self.re();
        if v <= 0.0 || v.is_nan() {
            return Err(AdError::Domain {
                op: "pow",
                value: v,
            });
        }
        Ok((e.clone() * self.ln()).exp())
    }
}

impl Scalar for f64 {
    fn constant(v: f64) -> Self {
        v
    }
    fn re(&self) -> f64 {
        *self
    }
    fn is_constant(&self) -> bool {
        true
    }
    fn sqrt(&self) -> Self {
        f64::sqrt(*self)
    }
    fn exp(&self) -> Self {
        f64::exp(*self)
    }
    fn ln(&self) -> Self {
        f64::ln(*self)
    }
    fn sin(&self) -> Self {
        f64::sin(*self)
    }
    fn cos(&self) -> Self {
        f64::cos(*self)
    }
    fn abs(&self) -> Self {
        f64::abs(*self)
    }
    fn scale(&self, k: f64) -> Self {
        self * k
    }
    fn recip(&self) -> Self {
        1.0 / self
    }
}

/// Value plus dense partial derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct Dual<T> {
    pub value: T,
    /// Partials with respect to the active variables; empty means constant.
    pub partials: Vec<T>,
}

pub type D1 = Dual<f64>;
pub type D2 = Dual<D1>;
pub type D3 = Dual<D2>;

impl<T: Scalar> Dual<T> {
    pub fn new(value: T, partials: Vec<T>) -> Self {
        Self { value, partials }
    }

    pub fn constant_of(value: T) -> Self {
        Self {
            value,
            partials: Vec::new(),
        }
    }

    /// Variable `index` out of `count` active variables.
    pub fn variable(value: T, index: usize, count: usize) -> Self {
        let mut partials = vec![T::zero(); count];
        partials[index] = T::one();
        Self { value, partials }
    }

    /// Identity seeding of every entry of `point`.
    pub fn variables(point: &[T]) -> Vec<Self> {
        let n = point.len();
        point
            .iter()
            .enumerate()
            .map(|(i, v)| Self::variable(v.clone(), i, n))
            .collect()
    }

    /// Partial `i`, zero when the dual is a constant.
    pub fn partial(&self, i: usize) -> T {
        self.partials.get(i).cloned().unwrap_or_else(T::zero)
    }

    /// Apply `f` with derivative `df` (both evaluated at the value).
    fn chain(&self, f: T, df: T) -> Self {
        Self {
            value: f,
            partials: self
                .partials
                .iter()
                .map(|d| df.clone() * d.clone())
                .collect(),
        }
    }
}

/// Seed `point` for differentiation with respect to the `active` indices.
///
/// The partial vectors have length `active.len()`; inactive coordinates are
/// constants.
pub fn seed(point: &[f64], active: &[usize]) -> Result<Vec<D1>, AdError> {
    let mut slot = vec![None; point.len()];
    for (k, &i) in active.iter().enumerate() {
        if i >= point.len() {
            return Err(AdError::IndexOutOfRange {
                index: i,
                dim: point.len(),
            });
        }
        if slot[i].is_some() {
            return Err(AdError::DuplicateIndex(i));
        }
        slot[i] = Some(k);
    }
    Ok(point
        .iter()
        .zip(slot)
        .map(|(&v, s)| match s {
            Some(k) => Dual::variable(v, k, active.len()),
            None => Dual::constant_of(v),
        })
        .collect())
}

fn combine<T: Scalar>(a: &[T], b: &[T], f: impl Fn(Option<&T>, Option<&T>) -> T) -> Vec<T> {
    let n = a.len().max(b.len());
    (0..n).map(|i| f(a.get(i), b.get(i))).collect()
}

impl<T: Scalar> Add for Dual<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        let partials = if rhs.partials.is_empty() {
            self.partials
        } else if self.partials.is_empty() {
            rhs.partials
        } else {
            combine(&self.partials, &rhs.partials, |x, y| match (x, y) {
                (Some(x), Some(y)) => x.clone() + y.clone(),
                (Some(x), None) => x.clone(),
                (None, Some(y)) => y.clone(),
                (None, None) => T::zero(),
            })
        };
        Self {
            value: self.value + rhs.value,
            partials,
        }
    }
}

impl<T: Scalar> Sub for Dual<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self + (-rhs)
    }
}

impl<T: Scalar> Neg for Dual<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self {
            value: -self.value,
            partials: self.partials.into_iter().map(|d| -d).collect(),
        }
    }
}

#[allow(clippy::suspicious_arithmetic_impl)]
impl<T: Scalar> Mul for Dual<T> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let partials = if rhs.partials.is_empty() {
            self.partials
                .into_iter()
                .map(|d| d * rhs.value.clone())
                .collect()
        } else if self.partials.is_empty() {
            rhs.partials
                .into_iter()
                .map(|d| self.value.clone() * d)
                .collect()
        } else {
            combine(&self.partials, &rhs.partials, |x, y| match (x, y) {
                (Some(x), Some(y)) => {
                    x.clone() * rhs.value.clone() + self.value.clone() * y.clone()
                }
                (Some(x), None) => x.clone() * rhs.value.clone(),
                (None, Some(y)) => self.value.clone() * y.clone(),
                (None, None) => T::zero(),
            })
        };
        Self {
            value: self.value * rhs.value,
            partials,
        }
    }
}

impl<T: Scalar> Div for Dual<T> {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        if rhs.partials.is_empty() {
            let inv = rhs.value.recip();
            return Self {
                value: self.value / rhs.value,
                partials: self.partials.into_iter().map(|d| d * inv.clone()).collect(),
            };
        }
        // keep the value bit-identical to the plain quotient
        let inv = rhs.value.recip();
        let q = self.value.clone() / rhs.value.clone();
        let partials = combine(&self.partials, &rhs.partials, |x, y| {
            let x = x.cloned().unwrap_or_else(T::zero);
            let y = y.cloned().unwrap_or_else(T::zero);
            (x - q.clone() * y) * inv.clone()
        });
        Self { value: q, partials }
    }
}

impl<T: Scalar> Scalar for Dual<T> {
    fn constant(v: f64) -> Self {
        Self::constant_of(T::constant(v))
    }

    fn re(&self) -> f64 {
        self.value.re()
    }

    fn is_constant(&self) -> bool {
        self.value.is_constant()
            && self
                .partials
                .iter()
                .all(|d| d.re() == 0.0 && d.is_constant())
    }

    fn sqrt(&self) -> Self {
        let s = self.value.sqrt();
        let ds = s.scale(2.0).recip();
        self.chain(s, ds)
    }

    fn exp(&self) -> Self {
        let e = self.value.exp();
        self.chain(e.clone(), e)
    }

    fn ln(&self) -> Self {
        self.chain(self.value.ln(), self.value.recip())
    }

    fn sin(&self) -> Self {
        self.chain(self.value.sin(), self.value.cos())
    }

    fn cos(&self) -> Self {
        self.chain(self.value.cos(), -self.value.sin())
    }

    fn abs(&self) -> Self {
        let sign = if self.value.re() < 0.0 { -1.0 } else { 1.0 };
        self.chain(self.value.abs(), T::constant(sign))
    }

    fn scale(&self, k: f64) -> Self {
        Self {
            value: self.value.scale(k),
            partials: self.partials.iter().map(|d| d.scale(k)).collect(),
        }
    }

    fn recip(&self) -> Self {
        let r = self.value.recip();
        let dr = -r.square();
        self.chain(r, dr)
    }
}

/// Gradient of a scalar function at `x` by one seeded evaluation.
pub fn gradient<F>(f: F, x: &[f64]) -> (f64, Vec<f64>)
where
    F: FnOnce(&[D1]) -> D1,
{
    let vars = Dual::variables(x);
    let y = f(&vars);
    let g = (0..x.len()).map(|i| y.partial(i)).collect();
    (y.value, g)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn square_and_reciprocal() {
        let x = seed(&[3.0], &[0]).unwrap().remove(0);
        let y = x.square();
        assert_eq!(y.value, 9.0);
        assert_eq!(y.partial(0), 6.0);

        let x = seed(&[2.0], &[0]).unwrap().remove(0);
        let y = x.recip();
        assert_eq!(y.value, 0.5);
        assert_eq!(y.partial(0), -0.25);
    }

    #[test]
    fn centrifugal_term_partial_in_r() {
        // f = M^2 / (2 m r^2), m = 1, only r active
        let v = seed(&[1.0, 1.0], &[0]).unwrap();
        let (r, big_m) = (v[0].clone(), v[1].clone());
        let f = big_m.square() / (r.square() * D1::constant(2.0));
        assert_eq!(f.partials.len(), 1);
        assert!(close(f.partial(0), -1.0, 1e-15));
    }

    #[test]
    fn pythagorean_identity_has_zero_slope() {
        for &x0 in &[-2.0, 0.0, 0.3, 1.7] {
            let x = Dual::variable(x0, 0, 1);
            let y = x.sin().square() + x.cos().square();
            assert!(close(y.value, 1.0, 1e-15));
            assert!(y.partial(0).abs() < 1e-15);
        }
    }

    #[test]
    fn cube_and_coulomb_slopes() {
        let r = Dual::variable(2.0, 0, 1);
        assert_eq!(r.powi(3).partial(0), 12.0);
        // U = -alpha / r with alpha = 1
        let u = -(D1::constant(1.0) / r);
        assert!(close(u.partial(0), 0.25, 1e-15));
    }

    #[test]
    fn seeding_errors() {
        assert_eq!(
            seed(&[1.0, 2.0], &[2]),
            Err(AdError::IndexOutOfRange { index: 2, dim: 2 })
        );
        assert_eq!(seed(&[1.0, 2.0], &[1, 1]), Err(AdError::DuplicateIndex(1)));
        let v = seed(&[1.0, 2.0, 3.0], &[2, 0]).unwrap();
        assert_eq!(v[2].partials, vec![1.0, 0.0]);
        assert_eq!(v[0].partials, vec![0.0, 1.0]);
        assert!(v[1].partials.is_empty());
    }

    #[test]
    fn checked_operations_report_domain() {
        let x = Dual::variable(-1.0, 0, 1);
        assert_eq!(
            x.try_sqrt(),
            Err(AdError::Domain {
                op: "sqrt",
                value: -1.0
            })
        );
        assert_eq!(
            x.try_ln(),
            Err(AdError::Domain {
                op: "log",
                value: -1.0
            })
        );
        assert!(x.try_powf(&D1::constant(0.5)).is_err());
        let zero = D1::constant(0.0);
        assert_eq!(
            x.try_div(&zero),
            Err(AdError::Domain {
                op: "div",
                value: 0.0
            })
        );
        assert!(Dual::variable(0.0, 0, 1).try_sqrt().is_err());
        assert_eq!(D1::constant(0.0).try_sqrt().unwrap().value, 0.0);
    }

    #[test]
    fn nested_duals_give_second_derivatives() {
        // f(x) = x^3 at x = 2: f' = 12, f'' = 12
        let inner = Dual::variable(2.0, 0, 1);
        let x: D2 = Dual::variable(inner, 0, 1);
        let y = x.powi(3);
        assert_eq!(y.value.value, 8.0);
        assert_eq!(y.value.partial(0), 12.0);
        assert_eq!(y.partial(0).partial(0), 12.0);

        // third derivative through D3: (x^4)''' = 24 x
        let x3: D3 = Dual::variable(Dual::variable(Dual::variable(1.5, 0, 1), 0, 1), 0, 1);
        let y = x3.powi(4);
        assert!(close(y.partial(0).partial(0).partial(0), 36.0, 1e-14));
    }

    #[test]
    fn elementary_functions_match_closed_form() {
        let x0 = 0.7;
        let x = Dual::variable(x0, 0, 1);
        assert!(close(x.exp().partial(0), x0.exp(), 1e-15));
        assert!(close(x.ln().partial(0), 1.0 / x0, 1e-15));
        assert!(close(x.sqrt().partial(0), 0.5 / x0.sqrt(), 1e-15));
        assert!(close(x.cos().partial(0), -x0.sin(), 1e-15));
        let p = x.try_powf(&D1::constant(2.5)).unwrap();
        assert!(close(p.partial(0), 2.5 * x0.powf(1.5), 1e-14));
        assert!(close((-x.clone()).abs().partial(0), 1.0, 0.0));
        assert!(close(x.powi(-2).partial(0), -2.0 / (x0 * x0 * x0), 1e-15));
    }
}
