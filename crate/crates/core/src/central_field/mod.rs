//! Planar motion in a central potential with the angular velocity fixed by
//! a conserved `M` instead of an equation of motion for `φ`:
//!
//! ```text
//! ṙ = u,   φ̇ = M/(m r²),   Ṁ = 0,   L = m u²/2 + M²/(2m r²) − U(r)
//! ```
//!
//! The closure adds `Z₁ = [Z, V] = −2M/(m r³) ∂_φ`, so phase space is
//! `(r, φ, M, p, p₁)`. Besides `M` the flow conserves
//! `E = H′ = p²/2m − M²/(2m r²) − (r/2)p₁ + U(r)` and
//! `K = M²/(4m) + (r³/8) p₁`; `K = 0` is ordinary central-force motion.

mod experiment;
mod multiplier;
mod orbit;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::autodiff::Dual;
use crate::dynamics::residual::sample_times;
use crate::dynamics::{DynError, Invariant, ResidualOptions, ResidualSeries, Trajectory};
use crate::expr::{Compiled, Expr, ExprError};
use crate::geometry::{halton_samples, ClosureOptions};
use crate::hamiltonize::{ControlSystem, HamError, HamiltonianSystem};

pub use experiment::{
    compare_multiplier, oracle_deviation, perihelion_angles, MultiplierComparison, OrbitRun,
    PERIHELION, R_MIN,
};
pub use multiplier::{kepler_system, KeplerSystem, MultiplierSystem};
pub use orbit::{classify, oracle_r_of_phi, OrbitClass, OrbitTag};

/// Relative band on `1 − 8Km/M²` treated as the critical branch.
pub const CRITICAL_K_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum CentralError {
    #[error("mass must be positive, got {0}")]
    Mass(f64),
    #[error("radius must be positive, got {0}")]
    Radius(f64),
    #[error("zero angular momentum: radial motion is not classified")]
    ZeroAngularMomentum,
    #[error("closed-form orbits need the Coulomb potential -alpha/r with alpha > 0")]
    NotCoulomb,
    #[error("angle {phi} lies outside the angular range of the {tag} orbit")]
    OutsideDomain { phi: f64, tag: OrbitTag },
    #[error("no orbit phase reproduces r = {r}")]
    NoPhase { r: f64 },
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Ham(#[from] HamError),
    #[error(transparent)]
    Dyn(#[from] DynError),
}

/// Physical constants of the model plus the three orbit constants.
#[derive(Debug, Clone, PartialEq)]
pub struct CentralFieldParams {
    pub m: f64,
    pub alpha: f64,
    /// Potential energy as an expression in `r` (may use `m`, `alpha`).
    pub potential: String,
    pub angular_momentum: f64,
    pub energy: f64,
    pub k: f64,
}

pub const COULOMB: &str = "-alpha/r";

impl Default for CentralFieldParams {
    fn default() -> Self {
        Self {
            m: 1.0,
            alpha: 1.0,
            potential: COULOMB.into(),
            angular_momentum: 1.0,
            energy: -0.5,
            k: 0.0,
        }
    }
}

impl CentralFieldParams {
    pub fn kepler(m: f64, alpha: f64) -> Self {
        Self {
            m,
            alpha,
            ..Self::default()
        }
    }

    pub fn with_orbit(mut self, angular_momentum: f64, energy: f64, k: f64) -> Self {
        self.angular_momentum = angular_momentum;
        self.energy = energy;
        self.k = k;
        self
    }

    /// Orbit constants from the shape parameters: `conic` selects
    /// `K < M²/8m`, otherwise `K > M²/8m`.
    pub fn from_shape(
        m: f64,
        alpha: f64,
        angular_momentum: f64,
        gamma: f64,
        e: f64,
        conic: bool,
    ) -> Self {
        let mm = angular_momentum * angular_momentum;
        let s = 1.0 / (gamma * gamma);
        let scale = gamma * gamma * m * alpha * alpha / (2.0 * mm);
        let (k, energy) = if conic {
            ((1.0 - s) * mm / (8.0 * m), (e * e - 1.0) * scale)
        } else {
            ((1.0 + s) * mm / (8.0 * m), (1.0 - e * e) * scale)
        };
        Self::kepler(m, alpha).with_orbit(angular_momentum, energy, k)
    }

    pub fn is_coulomb(&self) -> bool {
        self.alpha > 0.0
            && Expr::parse(&self.potential)
                .ok()
                .zip(Expr::parse(COULOMB).ok())
                .is_some_and(|(a, b)| a.to_string() == b.to_string())
    }

    fn bindings(&self) -> BTreeMap<String, f64> {
        BTreeMap::from([("m".to_string(), self.m), ("alpha".to_string(), self.alpha)])
    }

    fn check(&self) -> Result<(), CentralError> {
        if self.m > 0.0 {
            Ok(())
        } else {
            Err(CentralError::Mass(self.m))
        }
    }

    /// `U(r)` compiled over the single variable `r`.
    pub fn potential_fn(&self) -> Result<Compiled, CentralError> {
        Ok(Compiled::new(&self.potential, &["r"], &self.bindings())?)
    }

    /// `(U(r), U′(r))`.
    pub fn potential_and_slope(&self, r: f64) -> Result<(f64, f64), CentralError> {
        let u = self.potential_fn()?.eval(&[Dual::variable(r, 0, 1)])?;
        Ok((u.value, u.partial(0)))
    }

    /// `E = m ṙ²/2 + (M² − 8Km)/(2m r²) + U(r)`.
    pub fn energy_from_kinematics(
        &self,
        r: f64,
        rdot: f64,
        angular_momentum: f64,
        k: f64,
    ) -> Result<f64, CentralError> {
        if r <= 0.0 {
            return Err(CentralError::Radius(r));
        }
        let (u, _) = self.potential_and_slope(r)?;
        let mm = angular_momentum * angular_momentum;
        Ok(self.m * rdot * rdot / 2.0 + (mm - 8.0 * k * self.m) / (2.0 * self.m * r * r) + u)
    }

    /// Phase point `(r, φ, M, p, p₁)` with the given `ṙ` and `K`.
    pub fn state(&self, r: f64, rdot: f64, phi: f64, angular_momentum: f64, k: f64) -> Vec<f64> {
        let p1 = 8.0 * (k - angular_momentum * angular_momentum / (4.0 * self.m)) / (r * r * r);
        vec![r, phi, angular_momentum, self.m * rdot, p1]
    }
}

/// The normal form with the potential bound.
pub fn model(params: &CentralFieldParams) -> Result<ControlSystem, CentralError> {
    params.check()?;
    let u = Expr::parse(&params.potential)?.substitute("r", &Expr::Var("x1".into()));
    let z = vec![vec!["1".to_string(), "0".into(), "0".into()]];
    let v = vec!["0".to_string(), "x3/(m*x1^2)".into(), "0".into()];
    let l = format!("m*u1^2/2 + x3^2/(2*m*x1^2) - ({u})");
    let mut sys = ControlSystem::from_exprs("central-field", &z, &v, &l, params.bindings())?;
    sys.u_box = Some(vec![(-10.0, 10.0)]);
    Ok(sys)
}

/// Default closure samples: `r ∈ [0.5, 3]`, `φ ∈ [−π, π]`, `M ∈ [0.5, 2]`.
pub fn sample_box() -> Vec<(f64, f64)> {
    vec![
        (0.5, 3.0),
        (-std::f64::consts::PI, std::f64::consts::PI),
        (0.5, 2.0),
    ]
}

/// Closed, Hamiltonized model on the default samples.
pub fn hamiltonian_system(params: &CentralFieldParams) -> Result<HamiltonianSystem, CentralError> {
    let sys = model(params)?;
    let cl = sys.close(
        &halton_samples(&sample_box(), 32),
        ClosureOptions::default(),
    )?;
    Ok(HamiltonianSystem::build(&sys, cl)?)
}

/// `(M, E, K)` at a phase point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integrals {
    pub angular_momentum: f64,
    pub energy: f64,
    pub k: f64,
}

pub fn invariants(z: &[f64], params: &CentralFieldParams) -> Result<Integrals, CentralError> {
    let (r, big_m, p, p1) = (z[0], z[2], z[3], z[4]);
    if r <= 0.0 {
        return Err(CentralError::Radius(r));
    }
    let m = params.m;
    let (u, _) = params.potential_and_slope(r)?;
    Ok(Integrals {
        angular_momentum: big_m,
        energy: p * p / (2.0 * m) - big_m * big_m / (2.0 * m * r * r) - r / 2.0 * p1 + u,
        k: big_m * big_m / (4.0 * m) + r * r * r / 8.0 * p1,
    })
}

/// Ledger entries `M`, `E`, `K` for [`crate::dynamics::integrate`].
pub fn ledger(params: &CentralFieldParams) -> Vec<Invariant> {
    let names = ["M", "E", "K"];
    names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let p = params.clone();
            Invariant::new(*name, move |z| {
                let q = invariants(z, &p).map_err(|e| e.to_string())?;
                Ok([q.angular_momentum, q.energy, q.k][j])
            })
        })
        .collect()
}

/// `F = −(r/2) p₁`, the phase function whose Hamiltonian vector field is
/// the drift.
pub const DRIFT_GENERATOR: &str = "-x1/2*p2";

/// Deviation of `m r̈ r/2 + m ṙ²/2 + U(r) + (r/2)U′(r)` from its value at the
/// first evaluated sample, with `ṙ`, `r̈` differenced from the dense output.
/// `r` is read from component 0 of the trajectory.
pub fn third_order_residual_central(
    traj: &Trajectory,
    params: &CentralFieldParams,
    opts: &ResidualOptions,
) -> Result<ResidualSeries, CentralError> {
    params.check()?;
    let r_at = |t: f64| -> Result<f64, CentralError> { Ok(traj.eval(t)?[0]) };
    let times = sample_times(traj, |t| 3.0 * opts.d2(traj, t), opts)?;
    let m = params.m;
    let mut series = ResidualSeries {
        names: vec!["third_order".into()],
        ..Default::default()
    };
    let mut first: Option<f64> = None;
    for &t in &times {
        let d = opts.d2(traj, t);
        let f = [
            r_at(t - 2.0 * d)?,
            r_at(t - d)?,
            r_at(t)?,
            r_at(t + d)?,
            r_at(t + 2.0 * d)?,
        ];
        let rdot = (f[0] - 8.0 * f[1] + 8.0 * f[3] - f[4]) / (12.0 * d);
        let rddot = (-f[0] + 16.0 * f[1] - 30.0 * f[2] + 16.0 * f[3] - f[4]) / (12.0 * d * d);
        let r = f[2];
        let (u, du) = params.potential_and_slope(r)?;
        let terms = [m * rddot * r / 2.0, m * rdot * rdot / 2.0, u, r / 2.0 * du];
        let value: f64 = terms.iter().sum();
        let base = *first.get_or_insert(value);
        let scale = terms.iter().map(|v| v.abs()).sum::<f64>() + base.abs();
        series.t.push(t);
        series.values.push(vec![value - base]);
        series.scales.push(vec![scale]);
    }
    Ok(series)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn potential_substitution_reaches_lagrangian() {
        let sys = model(&CentralFieldParams::default()).unwrap();
        // L at r = 1, M = 1, u = 0: 0 + 1/2 + 1
        assert!((sys.lagrangian_value(&[1.0, 0.0, 1.0], &[0.0]).unwrap() - 1.5).abs() < 1e-15);
    }

    #[test]
    fn invariants_at_reference_point() {
        let q = invariants(&[1.0, 0.0, 1.0, 0.0, 0.0], &CentralFieldParams::default()).unwrap();
        assert_eq!(q.angular_momentum, 1.0);
        assert!((q.k - 0.25).abs() < 1e-15);
        assert!((q.energy + 1.5).abs() < 1e-15);
        let q = invariants(&[1.0, 0.0, 1.0, 0.0, -2.0], &CentralFieldParams::default()).unwrap();
        assert!(q.k.abs() < 1e-15);
    }

    #[test]
    fn zero_radius_is_rejected() {
        assert!(matches!(
            invariants(&[0.0, 0.0, 1.0, 0.0, 0.0], &CentralFieldParams::default()),
            Err(CentralError::Radius(_))
        ));
    }

    #[test]
    fn state_encodes_k() {
        let p = CentralFieldParams::default();
        let z = p.state(1.7, 0.3, 0.2, 1.1, 0.04);
        let q = invariants(&z, &p).unwrap();
        assert!((q.k - 0.04).abs() < 1e-14);
        let e = p.energy_from_kinematics(1.7, 0.3, 1.1, 0.04).unwrap();
        assert!((q.energy - e).abs() < 1e-14);
    }

    #[test]
    fn shape_round_trip() {
        let p = CentralFieldParams::from_shape(1.0, 1.0, 1.0, 8.0 / 7.0, 0.7, true);
        assert!((p.k - 15.0 / 512.0).abs() < 1e-15);
        let p = CentralFieldParams::from_shape(1.0, 1.0, 1.0, 3.0, 1.5, false);
        assert!((p.energy + 5.625).abs() < 1e-13);
        assert!(p.is_coulomb());
    }
}
