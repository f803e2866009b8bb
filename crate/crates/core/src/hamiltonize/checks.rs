//! Numerical certificates for the algebraic identities of a
//! [`HamiltonianSystem`].

use super::{HamError, HamiltonianSystem};
use crate::autodiff::{Dual, D1};
use crate::geometry::MapFn;

/// Bivector and drift at `z` with first derivatives: `pi[a][b].partial(c)`
/// is `∂_c Π^{ab}`.
#[allow(clippy::type_complexity)]
fn jets(hs: &HamiltonianSystem, z: &[f64]) -> Result<(Vec<Vec<D1>>, Vec<D1>), HamError> {
    hs.poisson_and_drift(&Dual::variables(z))
}

/// Largest component of the Schouten bracket `[Π, Π]`:
/// `Π^{ad}∂_dΠ^{bc} + Π^{bd}∂_dΠ^{ca} + Π^{cd}∂_dΠ^{ab}`.
pub fn jacobi_residual(hs: &HamiltonianSystem, z: &[f64]) -> Result<f64, HamError> {
    let (pi, _) = jets(hs, z)?;
    let d = z.len();
    let mut worst = 0.0_f64;
    for a in 0..d {
        for b in a + 1..d {
            for c in b + 1..d {
                let mut acc = 0.0;
                for e in 0..d {
                    acc += pi[a][e].value * pi[b][c].partial(e)
                        + pi[b][e].value * pi[c][a].partial(e)
                        + pi[c][e].value * pi[a][b].partial(e);
                }
                worst = worst.max(acc.abs());
            }
        }
    }
    Ok(worst)
}

/// Largest component of `L_𝐕 Π`:
/// `𝐕^c∂_cΠ^{ab} − Π^{cb}∂_c𝐕^a − Π^{ac}∂_c𝐕^b`. Zero exactly when the drift
/// differentiates the bracket.
pub fn drift_compatibility(hs: &HamiltonianSystem, z: &[f64]) -> Result<f64, HamError> {
    let (pi, v) = jets(hs, z)?;
    let d = z.len();
    let mut worst = 0.0_f64;
    for a in 0..d {
        for b in 0..d {
            let mut acc = 0.0;
            for c in 0..d {
                acc += v[c].value * pi[a][b].partial(c)
                    - pi[c][b].value * v[a].partial(c)
                    - pi[a][c].value * v[b].partial(c);
            }
            worst = worst.max(acc.abs());
        }
    }
    Ok(worst)
}

/// Largest `|Π^{ab} + Π^{ba}|`.
pub fn antisymmetry_defect(hs: &HamiltonianSystem, z: &[f64]) -> Result<f64, HamError> {
    let pi = hs.poisson::<f64>(z)?;
    let mut worst = 0.0_f64;
    for (a, row) in pi.iter().enumerate() {
        for (b, v) in row.iter().enumerate() {
            worst = worst.max((v + pi[b][a]).abs());
        }
    }
    Ok(worst)
}

fn scalar_gradient(f: &dyn MapFn, z: &[f64]) -> Result<(f64, Vec<f64>), HamError> {
    let y = f.eval_d1(&Dual::variables(z))?.remove(0);
    Ok((y.value, (0..z.len()).map(|i| y.partial(i)).collect()))
}

/// `{f, g}` at `z` for scalar phase functions.
pub fn poisson_bracket(
    hs: &HamiltonianSystem,
    f: &dyn MapFn,
    g: &dyn MapFn,
    z: &[f64],
) -> Result<f64, HamError> {
    let (_, df) = scalar_gradient(f, z)?;
    let (_, dg) = scalar_gradient(g, z)?;
    hs.bracket(&df, &dg, z)
}

/// `{f, H}` at `z`.
pub fn bracket_with_hamiltonian(
    hs: &HamiltonianSystem,
    f: &dyn MapFn,
    z: &[f64],
) -> Result<f64, HamError> {
    let (_, df) = scalar_gradient(f, z)?;
    let dh = hs.gradient(z)?;
    hs.bracket(&df, &dh, z)
}

/// Largest `|{z^a, F} − 𝐕^a|`: how far the Hamiltonian vector field of `F`
/// is from the drift at `z`.
pub fn hamiltonian_drift_defect(
    hs: &HamiltonianSystem,
    f: &dyn MapFn,
    z: &[f64],
) -> Result<f64, HamError> {
    let (_, df) = scalar_gradient(f, z)?;
    let (pi, v) = hs.poisson_and_drift::<f64>(z)?;
    Ok(pi
        .iter()
        .zip(&v)
        .map(|(row, va)| (row.iter().zip(&df).map(|(p, g)| p * g).sum::<f64>() - va).abs())
        .fold(0.0, f64::max))
}

/// True when `F` generates the drift at every sample within `tol`, so the
/// full flow is Hamiltonian with `H′ = H + F`.
pub fn check_hamiltonian_drift(
    hs: &HamiltonianSystem,
    f: &dyn MapFn,
    samples: &[Vec<f64>],
    tol: f64,
) -> Result<bool, HamError> {
    for z in samples {
        if hamiltonian_drift_defect(hs, f, z)? > tol {
            return Ok(false);
        }
    }
    Ok(true)
}

/// `{z^a, F}` as a sanity helper for scalar functions.
pub fn hamiltonian_vector_field(
    hs: &HamiltonianSystem,
    f: &dyn MapFn,
    z: &[f64],
) -> Result<Vec<f64>, HamError> {
    let (_, df) = scalar_gradient(f, z)?;
    let pi = hs.poisson::<f64>(z)?;
    Ok(pi
        .iter()
        .map(|row| row.iter().zip(&df).map(|(p, g)| p * g).sum())
        .collect())
}

/// Value of a scalar phase function.
pub fn eval_scalar(f: &dyn MapFn, z: &[f64]) -> Result<f64, HamError> {
    Ok(f.eval_f64(z)?[0])
}
