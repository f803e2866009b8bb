//! Residuals of the conditional-extremum equations along a trajectory.
//!
//! Time derivatives come from fourth-order central differences on the
//! dense output. Each residual component carries a scale, the sum of the
//! magnitudes of the terms it is built from, so that cancellation can be
//! judged relative to the size of the terms.

use super::{DynError, Trajectory};
use crate::autodiff::{Dual, D1};
use crate::geometry::linalg::{lstsq, solve};
use crate::geometry::structure_functions_at;
use crate::hamiltonize::{legendre, ControlSystem, HamiltonianSystem};

/// Where the control along the trajectory is taken from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlSource {
    /// `ū(x, p)` from the inverse Legendre map of the sampled momenta.
    FromMomenta,
    /// Least-squares solution of `Z u = ẋ − V` with `ẋ` from the samples.
    FromConstraint,
}

#[derive(Debug, Clone)]
pub struct ResidualOptions {
    /// Step of first-derivative differences.
    pub fd_step: f64,
    /// Step of second-derivative differences.
    pub fd_step2: f64,
    pub control: ControlSource,
    /// Restrict the evaluation to sample times in this interval.
    pub window: Option<(f64, f64)>,
    /// Evaluate at most this many samples, evenly strided.
    pub max_samples: Option<usize>,
    /// Interpret both steps as multiples of the accepted step size around
    /// each sample rather than as absolute times.
    pub local: bool,
}

impl ResidualOptions {
    fn scaled(&self, traj: &Trajectory, t: f64, step: f64) -> f64 {
        if self.local {
            step * traj.step_at(t)
        } else {
            step
        }
    }

    pub fn d1(&self, traj: &Trajectory, t: f64) -> f64 {
        self.scaled(traj, t, self.fd_step)
    }

    pub fn d2(&self, traj: &Trajectory, t: f64) -> f64 {
        self.scaled(traj, t, self.fd_step2)
    }
}

impl Default for ResidualOptions {
    fn default() -> Self {
        Self {
            fd_step: 0.2,
            fd_step2: 0.7,
            control: ControlSource::FromMomenta,
            window: None,
            max_samples: None,
            local: true,
        }
    }
}

/// Residual components per evaluated sample.
#[derive(Debug, Clone, Default)]
pub struct ResidualSeries {
    pub names: Vec<String>,
    pub t: Vec<f64>,
    /// `values[k][c]` is component `c` at time `t[k]`.
    pub values: Vec<Vec<f64>>,
    /// Sum of term magnitudes matching `values`.
    pub scales: Vec<Vec<f64>>,
}

impl ResidualSeries {
    fn new(names: Vec<String>) -> Self {
        Self {
            names,
            ..Default::default()
        }
    }

    fn push(&mut self, t: f64, row: Vec<(f64, f64)>) {
        self.t.push(t);
        self.values.push(row.iter().map(|r| r.0).collect());
        self.scales.push(row.iter().map(|r| r.1).collect());
    }

    pub fn max_abs(&self) -> f64 {
        self.values
            .iter()
            .flatten()
            .fold(0.0, |a, v| a.max(v.abs()))
    }

    /// Largest `|value| / max(1, scale)`.
    pub fn max_normalized(&self) -> f64 {
        self.values
            .iter()
            .flatten()
            .zip(self.scales.iter().flatten())
            .fold(0.0, |a, (v, s)| a.max(v.abs() / s.max(1.0)))
    }

    /// Largest `|value|` of the components whose name starts with `prefix`.
    pub fn max_abs_of(&self, prefix: &str) -> f64 {
        let cols: Vec<usize> = self
            .names
            .iter()
            .enumerate()
            .filter(|(_, n)| n.starts_with(prefix))
            .map(|(i, _)| i)
            .collect();
        self.values
            .iter()
            .flat_map(|row| cols.iter().map(move |&c| row[c].abs()))
            .fold(0.0, f64::max)
    }

    /// Same as [`max_normalized`](Self::max_normalized) restricted to a prefix.
    pub fn max_normalized_of(&self, prefix: &str) -> f64 {
        let cols: Vec<usize> = self
            .names
            .iter()
            .enumerate()
            .filter(|(_, n)| n.starts_with(prefix))
            .map(|(i, _)| i)
            .collect();
        let mut worst = 0.0_f64;
        for (row, sc) in self.values.iter().zip(&self.scales) {
            for &c in &cols {
                worst = worst.max(row[c].abs() / sc[c].max(1.0));
            }
        }
        worst
    }
}

type VecFn<'a> = dyn Fn(f64) -> Result<Vec<f64>, DynError> + 'a;

fn fd1(f: &VecFn<'_>, t: f64, d: f64) -> Result<Vec<f64>, DynError> {
    let (a, b, c, e) = (f(t - 2.0 * d)?, f(t - d)?, f(t + d)?, f(t + 2.0 * d)?);
    Ok((0..a.len())
        .map(|i| (a[i] - 8.0 * b[i] + 8.0 * c[i] - e[i]) / (12.0 * d))
        .collect())
}

fn fd2(f: &VecFn<'_>, t: f64, d: f64) -> Result<Vec<f64>, DynError> {
    let (a, b, m, c, e) = (
        f(t - 2.0 * d)?,
        f(t - d)?,
        f(t)?,
        f(t + d)?,
        f(t + 2.0 * d)?,
    );
    Ok((0..a.len())
        .map(|i| (-a[i] + 16.0 * b[i] - 30.0 * m[i] + 16.0 * c[i] - e[i]) / (12.0 * d * d))
        .collect())
}

/// Sample times far enough from both ends for every stencil in use.
pub(crate) fn sample_times(
    traj: &Trajectory,
    margin: impl Fn(f64) -> f64,
    opts: &ResidualOptions,
) -> Result<Vec<f64>, DynError> {
    let (t0, t1) = (traj.t_start(), traj.t_end());
    let (wlo, whi) = opts.window.unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
    let ts: Vec<f64> = traj
        .t
        .iter()
        .copied()
        .filter(|&t| t >= wlo && t <= whi && t - margin(t) >= t0 && t + margin(t) <= t1)
        .collect();
    if ts.is_empty() {
        return Err(DynError::InsufficientSamples(format!(
            "no samples clear of the difference stencil in [{t0}, {t1}]"
        )));
    }
    Ok(match opts.max_samples {
        Some(k) if k > 0 && ts.len() > k => {
            let stride = ts.len().div_ceil(k);
            ts.into_iter().step_by(stride).collect()
        }
        _ => ts,
    })
}

/// Kinematic data of one trajectory point.
struct Point {
    x: Vec<f64>,
    u: Vec<f64>,
    l_x: Vec<f64>,
    l_u: Vec<f64>,
}

struct Sampler<'a> {
    hs: &'a HamiltonianSystem,
    traj: &'a Trajectory,
    opts: &'a ResidualOptions,
}

impl Sampler<'_> {
    fn sys(&self) -> &ControlSystem {
        &self.hs.system
    }

    fn x(&self, t: f64) -> Result<Vec<f64>, DynError> {
        let mut z = self.traj.eval(t)?;
        z.truncate(self.sys().n);
        Ok(z)
    }

    fn xdot(&self, t: f64) -> Result<Vec<f64>, DynError> {
        fd1(&|s| self.x(s), t, self.opts.d1(self.traj, t))
    }

    fn point(&self, t: f64) -> Result<Point, DynError> {
        let z = self.traj.eval(t)?;
        let sys = self.sys();
        let x = z[..sys.n].to_vec();
        let u = match self.opts.control {
            ControlSource::FromMomenta => {
                let p = self.hs.original_momenta(&z)?;
                legendre(sys, &x, &p)?.0
            }
            ControlSource::FromConstraint => constraint_control(sys, &x, &self.xdot(t)?)?,
        };
        let (l_x, l_u) = sys.gradient(&x, &u)?;
        Ok(Point { x, u, l_x, l_u })
    }
}

/// `u` with `Z u` closest to `ẋ − V`.
fn constraint_control(sys: &ControlSystem, x: &[f64], xdot: &[f64]) -> Result<Vec<f64>, DynError> {
    let v = sys
        .drift
        .eval(x)
        .map_err(crate::hamiltonize::HamError::from)?;
    let cols = sys
        .generators
        .iter()
        .map(|g| g.eval(x))
        .collect::<Result<Vec<_>, _>>()
        .map_err(crate::hamiltonize::HamError::from)?;
    let rhs: Vec<f64> = xdot.iter().zip(&v).map(|(a, b)| a - b).collect();
    Ok(lstsq(&cols, &rhs)
        .map_err(crate::hamiltonize::HamError::from)?
        .0)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Residual of the conditional-extremum equations along `traj`.
///
/// Components:
/// - `constraint_i`: `ẋ^i − Z^i_α u^α − V^i`;
/// - `extremum_α`: the conditional-extremum equation of generator `α`, in
///   the integrable form when the closure adds nothing and in the one-step
///   form when it adds exactly `Z^(1)_α = [Z_α, V]`;
/// - `momentum_α` (one-step only): `ṗ^(0)_α − {p^(0)_α, H} − 𝐕_{p^(0)_α}`,
///   which ties the sampled higher momenta to the trajectory.
///
/// Other closure shapes are rejected.
pub fn conditional_residual(
    hs: &HamiltonianSystem,
    traj: &Trajectory,
    opts: &ResidualOptions,
) -> Result<ResidualSeries, DynError> {
    let sys = &hs.system;
    let cl = &hs.closure;
    let (n, m) = (sys.n, sys.m);
    let integrable = cl.m_bar() == m;
    if !integrable && !hs.is_one_step() {
        return Err(DynError::Invalid(format!(
            "conditional residual needs an integrable or one-step closure; {} closes to {} fields from {}",
            sys.name,
            cl.m_bar(),
            m
        )));
    }
    if traj.dim() != hs.dim() {
        return Err(DynError::Dimension {
            expected: hs.dim(),
            got: traj.dim(),
        });
    }
    let s = Sampler { hs, traj, opts };
    let nested = opts.control == ControlSource::FromConstraint;
    let margin = |t: f64| {
        let (a, b) = (opts.d1(traj, t), opts.d2(traj, t));
        3.0 * a.max(b) + if nested { 3.0 * a } else { 0.0 }
    };
    let times = sample_times(traj, margin, opts)?;

    let mut names: Vec<String> = (1..=n).map(|i| format!("constraint_{i}")).collect();
    names.extend((1..=m).map(|a| format!("extremum_{a}")));
    if !integrable {
        names.extend((1..=m).map(|a| format!("momentum_{a}")));
    }
    let mut out = ResidualSeries::new(names);

    // L_u, L_x·Z_α and u as one vector so a single stencil serves all three
    let packed = |t: f64| -> Result<Vec<f64>, DynError> {
        let pt = s.point(t)?;
        let mut w = pt.l_u.clone();
        for g in &sys.generators[..m] {
            let z = g.eval(&pt.x).map_err(crate::hamiltonize::HamError::from)?;
            w.push(dot(&pt.l_x, &z));
        }
        w.extend_from_slice(&pt.u);
        Ok(w)
    };

    for &t in &times {
        let pt = s.point(t)?;
        let xdot = s.xdot(t)?;
        let st =
            structure_functions_at::<f64>(cl, &pt.x).map_err(crate::hamiltonize::HamError::from)?;
        let mut row = Vec::with_capacity(n + 2 * m);

        for i in 0..n {
            let zu: f64 = (0..m).map(|a| st.basis[a][i] * pt.u[a]).sum();
            let r = xdot[i] - zu - st.drift[i];
            row.push((r, xdot[i].abs() + zu.abs() + st.drift[i].abs()));
        }

        let dw = fd1(&packed, t, opts.d1(traj, t))?;
        let dl_u = &dw[..m];
        let d_lxz = &dw[m..2 * m];
        let du = &dw[2 * m..3 * m];

        if integrable {
            for a in 0..m {
                let lxz: f64 = (0..n).map(|i| pt.l_x[i] * st.basis[a][i]).sum();
                let mut drift_term = 0.0;
                let mut scale = lxz.abs() + dl_u[a].abs();
                for b in 0..m {
                    let mut coeff = st.v[a][b];
                    for g in 0..m {
                        coeff += st.u[b][a][g] * pt.u[g];
                    }
                    drift_term += pt.l_u[b] * coeff;
                    scale += (pt.l_u[b] * coeff).abs();
                }
                row.push((lxz - dl_u[a] - drift_term, scale));
            }
        } else {
            let ddl_u = fd2(&|s2| Ok(s.point(s2)?.l_u), t, opts.d2(traj, t))?;
            let dst = structure_functions_at::<D1>(cl, &Dual::variables(&pt.x))
                .map_err(crate::hamiltonize::HamError::from)?;
            for a in 0..m {
                row.push(one_step_component(
                    a, m, n, &pt, &st, &dst, dl_u, ddl_u[a], d_lxz[a], du,
                ));
            }
            let z = traj.eval(t)?;
            let zdot = fd1(&|s2| traj.eval(s2), t, opts.d1(traj, t))?;
            let rhs = hs.rhs(&z)?;
            for a in 0..m {
                let k = n + a;
                row.push((zdot[k] - rhs[k], zdot[k].abs() + rhs[k].abs()));
            }
        }
        out.push(t, row);
    }
    Ok(out)
}

/// One-step conditional-extremum equation of generator `a`.
///
/// Blocks of the structure functions over the basis `(Z^(0), Z^(1))`:
/// `U00[β][ρ][α]` is the `Z^(0)_β` coefficient of `[Z^(0)_ρ, Z^(0)_α]`,
/// `U01_k[β][ρ][α]` the `Z^(k)_β` coefficient of `[Z^(0)_ρ, Z^(1)_α]`,
/// `V1_k[α][β]` the `Z^(k)_β` coefficient of `[Z^(1)_α, V]`.
#[allow(clippy::too_many_arguments)]
fn one_step_component(
    a: usize,
    m: usize,
    n: usize,
    pt: &Point,
    st: &crate::geometry::Structure<f64>,
    dst: &crate::geometry::Structure<D1>,
    dl_u: &[f64],
    ddl_u: f64,
    d_lxz: f64,
    du: &[f64],
) -> (f64, f64) {
    let u = &pt.u;
    let l_u = &pt.l_u;
    let u00 = |b: usize, r: usize, al: usize| st.u[b][r][al];
    let u01_1 = |b: usize, r: usize, al: usize| st.u[m + b][r][m + al];
    let u01_0 = |b: usize, r: usize, al: usize| st.u[b][r][m + al];
    let v1_1 = |al: usize, b: usize| st.v[m + al][m + b];
    let v1_0 = |al: usize, b: usize| st.v[m + al][b];
    // directional derivatives of U00 along Z^(0)_ω and along V
    let d_u00 = |b: usize, r: usize, al: usize, dir: &[f64]| -> f64 {
        (0..n).map(|j| dst.u[b][r][al].partial(j) * dir[j]).sum()
    };
    let z0 = |w: usize| -> Vec<f64> { st.basis[w].clone() };

    let mut terms: Vec<f64> = vec![ddl_u];
    for b in 0..m {
        let mut c = -v1_1(a, b);
        for r in 0..m {
            c += u[r] * (u01_1(b, r, a) + u00(b, r, a));
        }
        terms.push(-dl_u[b] * c);

        let mut q = -v1_0(a, b);
        for w in 0..m {
            let zw = z0(w);
            for r in 0..m {
                let mut uu = -d_u00(b, r, a, &zw);
                for g in 0..m {
                    uu += u00(b, r, g) * u01_1(g, w, a);
                }
                q += u[w] * u[r] * uu;
            }
        }
        for r in 0..m {
            q -= du[r] * u00(b, r, a);
            let mut lin = u01_0(b, r, a) - d_u00(b, r, a, &st.drift);
            for g in 0..m {
                lin -= u00(b, r, g) * v1_1(a, g);
            }
            q += u[r] * lin;
        }
        terms.push(l_u[b] * q);
    }
    terms.push(-d_lxz);
    let mut xterm = 0.0;
    for i in 0..n {
        let mut c = st.basis[m + a][i];
        for w in 0..m {
            c -= st.basis[w][i] * v1_1(a, w);
            for r in 0..m {
                c += u[r] * st.basis[w][i] * u01_1(w, r, a);
            }
        }
        xterm += pt.l_x[i] * c;
    }
    terms.push(xterm);
    (terms.iter().sum(), terms.iter().map(|v| v.abs()).sum())
}

/// `ẋ − Π∇H − 𝐕` along the trajectory for every phase component.
pub fn hamiltonian_residual(
    hs: &HamiltonianSystem,
    traj: &Trajectory,
    opts: &ResidualOptions,
) -> Result<ResidualSeries, DynError> {
    let times = sample_times(traj, |t| 3.0 * opts.d1(traj, t), opts)?;
    let mut out = ResidualSeries::new(hs.coordinate_names());
    for &t in &times {
        let z = traj.eval(t)?;
        let zdot = fd1(&|s| traj.eval(s), t, opts.d1(traj, t))?;
        let rhs = hs.rhs(&z)?;
        out.push(
            t,
            zdot.iter()
                .zip(&rhs)
                .map(|(a, b)| (a - b, a.abs() + b.abs()))
                .collect(),
        );
    }
    Ok(out)
}

/// Euler–Lagrange residual `∂L̃/∂xⁱ − d/dt ∂L̃/∂ẋⁱ` of the velocity
/// Lagrangian `L̃(x, ẋ) = L(x, Z⁻¹(ẋ − V))`. Needs a square frame (`m = n`).
pub fn euler_lagrange_residual(
    sys: &ControlSystem,
    traj: &Trajectory,
    opts: &ResidualOptions,
) -> Result<ResidualSeries, DynError> {
    let n = sys.n;
    if sys.m != n {
        return Err(DynError::Invalid(format!(
            "velocity Lagrangian needs as many controls as states, {} has m = {} and n = {n}",
            sys.name, sys.m
        )));
    }
    let x_at = |t: f64| -> Result<Vec<f64>, DynError> {
        let mut z = traj.eval(t)?;
        z.truncate(n);
        Ok(z)
    };
    // gradient of L̃ in (x, ẋ) at time t
    let grad = |t: f64| -> Result<Vec<f64>, DynError> {
        let x = x_at(t)?;
        let xdot = fd1(&x_at, t, opts.d1(traj, t))?;
        let mut args = x.clone();
        args.extend_from_slice(&xdot);
        let seeded: Vec<D1> = Dual::variables(&args);
        let (xs, vs) = seeded.split_at(n);
        let err = crate::hamiltonize::HamError::from;
        let cols = sys
            .generators
            .iter()
            .map(|g| g.eval(xs))
            .collect::<Result<Vec<_>, _>>()
            .map_err(err)?;
        let v = sys.drift.eval(xs).map_err(err)?;
        let rhs: Vec<D1> = vs
            .iter()
            .zip(&v)
            .map(|(a, b)| a.clone() - b.clone())
            .collect();
        let u = solve(&cols, &rhs).map_err(err)?;
        let mut largs = xs.to_vec();
        largs.extend(u);
        let l = sys.lagrangian.eval_d1(&largs).map_err(err)?.remove(0);
        Ok((0..2 * n).map(|i| l.partial(i)).collect())
    };
    let times = sample_times(traj, |t| 6.0 * opts.d1(traj, t), opts)?;
    let mut out = ResidualSeries::new((1..=n).map(|i| format!("euler_lagrange_{i}")).collect());
    for &t in &times {
        let g = grad(t)?;
        let dp = fd1(&|s| Ok(grad(s)?[n..].to_vec()), t, opts.d1(traj, t))?;
        out.push(
            t,
            (0..n)
                .map(|i| (g[i] - dp[i], g[i].abs() + dp[i].abs()))
                .collect(),
        );
    }
    Ok(out)
}
