//! Small dense linear algebra generic over [`Scalar`].
//!
//! Matrices are column lists (`cols[k]` is the k-th column); the sizes here
//! are a handful of rows, so nothing clever is needed.

use nalgebra::DMatrix;

use super::GeomError;
use crate::autodiff::Scalar;

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (x, y)| acc + x.clone() * y.clone())
}

/// Thin QR of a full-column-rank matrix by modified Gram–Schmidt with one
/// reorthogonalisation pass. Returns `(Q columns, R upper triangle)`.
#[allow(clippy::type_complexity)]
pub fn qr<T: Scalar>(cols: &[Vec<T>]) -> Result<(Vec<Vec<T>>, Vec<Vec<T>>), GeomError> {
    let k = cols.len();
    let mut q: Vec<Vec<T>> = Vec::with_capacity(k);
    let mut r = vec![vec![T::zero(); k]; k];
    for (j, col) in cols.iter().enumerate() {
        let mut w = col.clone();
        for _pass in 0..2 {
            for (i, qi) in q.iter().enumerate() {
                let c = dot(qi, &w);
                for (wk, qk) in w.iter_mut().zip(qi) {
                    *wk = wk.clone() - c.clone() * qk.clone();
                }
                r[i][j] = r[i][j].clone() + c;
            }
        }
        let norm2 = dot(&w, &w);
        let scale = dot(col, col).re();
        if norm2.re() <= 1e-28 * scale || !norm2.re().is_finite() {
            return Err(GeomError::Singular);
        }
        let norm = norm2.sqrt();
        let inv = norm.recip();
        r[j][j] = norm;
        q.push(w.into_iter().map(|v| v * inv.clone()).collect());
    }
    Ok((q, r))
}

/// Least-squares coefficients `c` minimising `‖Σ c_k cols[k] − b‖` and the
/// residual vector `b − Σ c_k cols[k]`.
pub fn lstsq<T: Scalar>(cols: &[Vec<T>], b: &[T]) -> Result<(Vec<T>, Vec<T>), GeomError> {
    let (q, r) = qr(cols)?;
    lstsq_with(&q, &r, cols, b)
}

/// [`lstsq`] reusing a factorisation of `cols`.
pub fn lstsq_with<T: Scalar>(
    q: &[Vec<T>],
    r: &[Vec<T>],
    cols: &[Vec<T>],
    b: &[T],
) -> Result<(Vec<T>, Vec<T>), GeomError> {
    let k = q.len();
    let qtb: Vec<T> = q.iter().map(|qi| dot(qi, b)).collect();
    let mut c = vec![T::zero(); k];
    for i in (0..k).rev() {
        let mut acc = qtb[i].clone();
        for j in i + 1..k {
            acc = acc - r[i][j].clone() * c[j].clone();
        }
        c[i] = acc / r[i][i].clone();
    }
    let mut res = b.to_vec();
    for (ck, col) in c.iter().zip(cols) {
        for (ri, v) in res.iter_mut().zip(col) {
            *ri = ri.clone() - ck.clone() * v.clone();
        }
    }
    Ok((c, res))
}

/// Solve a square system given by its columns.
pub fn solve<T: Scalar>(cols: &[Vec<T>], b: &[T]) -> Result<Vec<T>, GeomError> {
    if cols.len() != b.len() {
        return Err(GeomError::Dimension {
            expected: b.len(),
            got: cols.len(),
        });
    }
    Ok(lstsq(cols, b)?.0)
}

/// Singular values, largest first.
pub fn singular_values(cols: &[Vec<f64>]) -> Vec<f64> {
    if cols.is_empty() {
        return Vec::new();
    }
    let n = cols[0].len();
    let m = DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]);
    let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// `σ_min / σ_max`, or 0 for an empty or zero matrix.
pub fn conditioning(cols: &[Vec<f64>]) -> f64 {
    let s = singular_values(cols);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if hi > 0.0 && s.len() == cols.len() => lo / hi,
        _ => 0.0,
    }
}

/// [`conditioning`] after scaling every column to unit length, so that
/// fields of very different size are not mistaken for dependent ones.
pub fn equilibrated_conditioning(cols: &[Vec<f64>]) -> f64 {
    let mut unit = Vec::with_capacity(cols.len());
    for c in cols {
        let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return 0.0;
        }
        unit.push(c.iter().map(|v| v / norm).collect::<Vec<f64>>());
    }
    conditioning(&unit)
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{Dual, D1};

    #[test]
    fn equilibration_ignores_column_scale() {
        let cols = vec![vec![1.0, 0.0], vec![0.0, 1e-9]];
        assert!(conditioning(&cols) < 1e-8);
        assert_eq!(equilibrated_conditioning(&cols), 1.0);
        assert_eq!(
            equilibrated_conditioning(&[vec![1.0, 0.0], vec![0.0, 0.0]]),
            0.0
        );
    }

    #[test]
    fn exact_fit_and_orthogonal_residual() {
        let cols = vec![vec![1.0, 0.0, 1.0], vec![0.0, 2.0, 1.0]];
        let b = vec![2.0, 4.0, 4.0];
        let (c, res) = lstsq(&cols, &b).unwrap();
        assert!((c[0] - 2.0).abs() < 1e-15 && (c[1] - 2.0).abs() < 1e-15);
        assert!(max_abs(&res) < 1e-15);

        let b = vec![0.0, 0.0, 1.0];
        let (_, res) = lstsq(&cols, &b).unwrap();
        for col in &cols {
            let d: f64 = col.iter().zip(&res).map(|(a, b)| a * b).sum();
            assert!(d.abs() < 1e-15);
        }
    }

    #[test]
    fn dependent_columns_are_singular() {
        let cols = vec![vec![1.0, 2.0], vec![2.0, 4.0]];
        assert_eq!(lstsq(&cols, &[1.0, 0.0]), Err(GeomError::Singular));
        assert!(conditioning(&cols) < 1e-15);
    }

    #[test]
    fn coefficients_carry_derivatives() {
        // b = t * col, so the coefficient is t with unit slope
        let t = Dual::variable(0.7, 0, 1);
        let cols: Vec<Vec<D1>> = vec![vec![D1::constant(1.0), D1::constant(3.0)]];
        let b = vec![t.clone(), t.clone() * D1::constant(3.0)];
        let (c, _) = lstsq(&cols, &b).unwrap();
        assert!((c[0].value - 0.7).abs() < 1e-15);
        assert!((c[0].partial(0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn singular_values_sorted() {
        let cols = vec![vec![3.0, 0.0], vec![0.0, 4.0]];
        assert_eq!(singular_values(&cols), vec![4.0, 3.0]);
        assert_eq!(conditioning(&cols), 0.75);
    }
}
