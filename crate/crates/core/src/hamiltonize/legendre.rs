use nalgebra::{DMatrix, DVector};

use super::{ControlSystem, HamError};

pub const MAX_NEWTON: usize = 50;
pub const LEGENDRE_TOL: f64 = 1e-12;

fn residual(l_u: &[f64], p: &[f64]) -> Vec<f64> {
    l_u.iter().zip(p).map(|(a, b)| a - b).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Outcome of a Newton run from one seed.
enum Newton {
    Converged(Vec<f64>),
    Stalled { u: Vec<f64>, residual: f64 },
}

fn newton(sys: &ControlSystem, x: &[f64], p: &[f64], seed: Vec<f64>) -> Result<Newton, HamError> {
    let m = sys.m;
    let tol = LEGENDRE_TOL * norm(p).max(1.0);
    let mut u = seed;
    let (l_u, mut l_uu) = sys.control_jet(x, &u)?;
    let mut r = residual(&l_u, p);
    let mut rn = norm(&r);
    for _ in 0..MAX_NEWTON {
        // regularity is required at the solution too, not only along the way
        let h = DMatrix::from_fn(m, m, |a, b| l_uu[a][b]);
        let det = h.determinant();
        if det.abs() <= sys.hessian_tol || !det.is_finite() {
            return Err(HamError::SingularHessian {
                x: x.to_vec(),
                u,
                det,
            });
        }
        if rn <= tol {
            return Ok(Newton::Converged(u));
        }
        let step = h
            .lu()
            .solve(&DVector::from_column_slice(&r))
            .ok_or_else(|| HamError::SingularHessian {
                x: x.to_vec(),
                u: u.clone(),
                det,
            })?;
        // damped: halve until the residual decreases
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial: Vec<f64> = u
                .iter()
                .zip(step.iter())
                .map(|(ui, si)| ui - lambda * si)
                .collect();
            if let Ok((tl_u, tl_uu)) = sys.control_jet(x, &trial) {
                let tr = residual(&tl_u, p);
                let tn = norm(&tr);
                if tn < rn || tn <= tol {
                    u = trial;
                    l_uu = tl_uu;
                    r = tr;
                    rn = tn;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Ok(Newton::Stalled { u, residual: rn });
        }
    }
    if rn <= tol {
        Ok(Newton::Converged(u))
    } else {
        Ok(Newton::Stalled { u, residual: rn })
    }
}

/// Invert `p = ∂L/∂u` at `x` by damped Newton from `u = 0`, falling back to
/// the best point of a coarse grid over `u_box`. Returns `(ū, H)` with
/// `H = p·ū − L(x, ū)`.
pub fn legendre(sys: &ControlSystem, x: &[f64], p: &[f64]) -> Result<(Vec<f64>, f64), HamError> {
    if p.len() != sys.m || x.len() != sys.n {
        return Err(HamError::Invalid(format!(
            "Legendre map expects {} states and {} momenta",
            sys.n, sys.m
        )));
    }
    let u = match newton(sys, x, p, vec![0.0; sys.m])? {
        Newton::Converged(u) => u,
        Newton::Stalled { u, residual } => match &sys.u_box {
            Some(bounds) => {
                let seed = grid_seed(sys, x, p, bounds)?;
                match newton(sys, x, p, seed)? {
                    Newton::Converged(u) => u,
                    Newton::Stalled { u, residual } => {
                        return Err(HamError::NoConvergence {
                            x: x.to_vec(),
                            u,
                            residual,
                        })
                    }
                }
            }
            None => {
                return Err(HamError::NoConvergence {
                    x: x.to_vec(),
                    u,
                    residual,
                })
            }
        },
    };
    let l = sys.lagrangian_value(x, &u)?;
    let h = p.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>() - l;
    Ok((u, h))
}

const GRID: usize = 9;

fn grid_seed(
    sys: &ControlSystem,
    x: &[f64],
    p: &[f64],
    bounds: &[(f64, f64)],
) -> Result<Vec<f64>, HamError> {
    let m = sys.m;
    let total = GRID
        .checked_pow(m as u32)
        .unwrap_or(usize::MAX)
        .min(1 << 16);
    let mut best = (f64::INFINITY, vec![0.0; m]);
    for k in 0..total {
        let mut idx = k;
        let u: Vec<f64> = bounds
            .iter()
            .map(|&(lo, hi)| {
                let i = idx % GRID;
                idx /= GRID;
                lo + (hi - lo) * i as f64 / (GRID - 1) as f64
            })
            .collect();
        if let Ok((_, l_u)) = sys.gradient(x, &u) {
            let r = norm(&residual(&l_u, p));
            if r < best.0 {
                best = (r, u);
            }
        }
    }
    Ok(best.1)
}

/// Smallest `|det ∂²L/∂u∂u|` over the given `(x, u)` points.
pub fn min_hessian_det(
    sys: &ControlSystem,
    points: &[(Vec<f64>, Vec<f64>)],
) -> Result<f64, HamError> {
    let mut worst = f64::INFINITY;
    for (x, u) in points {
        let (_, l_uu) = sys.control_jet(x, u)?;
        let h = DMatrix::from_fn(sys.m, sys.m, |a, b| l_uu[a][b]);
        worst = worst.min(h.determinant().abs());
    }
    Ok(worst)
}
