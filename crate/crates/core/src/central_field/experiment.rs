//! Orbit runs checked against the closed forms.

use super::{
    classify, hamiltonian_system, kepler_system, ledger, CentralError, CentralFieldParams,
    MultiplierSystem,
};
use crate::dynamics::{integrate, Direction, Event, IntegrateOptions, OdeSystem, Trajectory};

pub const PERIHELION: &str = "perihelion";
pub const R_MIN: &str = "r_min";

#[derive(Debug, Clone)]
pub struct OrbitRun {
    pub rtol: f64,
    pub atol: f64,
    /// Terminal event when `r` falls below this radius.
    pub r_min: Option<f64>,
    /// Record perihelion passages (`p` rising through zero).
    pub perihelia: bool,
}

impl Default for OrbitRun {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            r_min: Some(1e-3),
            perihelia: true,
        }
    }
}

impl OrbitRun {
    pub fn options(&self, params: &CentralFieldParams) -> IntegrateOptions {
        let mut events = Vec::new();
        if let Some(r) = self.r_min {
            events.push(Event::below(R_MIN, 0, r));
        }
        if self.perihelia {
            events.push(Event::new(PERIHELION, Direction::Rising, false, |_, z| {
                z[3]
            }));
        }
        IntegrateOptions {
            rtol: self.rtol,
            atol: self.atol,
            events,
            invariants: ledger(params),
            ..Default::default()
        }
    }

    /// Integrate from `(r, ṙ, φ)` with the `M` and `K` of `params`.
    pub fn run(
        &self,
        params: &CentralFieldParams,
        r0: f64,
        rdot: f64,
        phi: f64,
        t_end: f64,
    ) -> Result<Trajectory, CentralError> {
        let hs = hamiltonian_system(params)?;
        let z0 = params.state(r0, rdot, phi, params.angular_momentum, params.k);
        Ok(integrate(&hs, &z0, (0.0, t_end), &self.options(params))?)
    }
}

/// Largest `|r − r_oracle(φ)|/r` over the samples with `r ≥ r_floor`, after
/// fitting the oracle phase to the first sample.
pub fn oracle_deviation(
    traj: &Trajectory,
    params: &CentralFieldParams,
    r_floor: f64,
) -> Result<f64, CentralError> {
    let mut cls = classify(params)?;
    let z0 = &traj.z[0];
    cls.fit_phase(z0[0], z0[3] / params.m, z0[1])?;
    let mut worst = 0.0_f64;
    for z in traj.z.iter().filter(|z| z[0] >= r_floor) {
        worst = worst.max((z[0] - cls.r_of_phi(z[1])?).abs() / z[0]);
    }
    Ok(worst)
}

/// Angles `φ` of the recorded perihelion passages.
pub fn perihelion_angles(traj: &Trajectory) -> Vec<f64> {
    traj.events
        .iter()
        .filter(|e| e.name == PERIHELION)
        .map(|e| e.state[1])
        .collect()
}

/// Multiplier-system run projected onto the partially Lagrangian one.
#[derive(Debug, Clone)]
pub struct MultiplierComparison {
    /// `c = m r² λ̇`.
    pub c: f64,
    /// `K = cM/(4m)` used for the partially Lagrangian run.
    pub k: f64,
    /// Largest `|K_measured − cM/4m|` along the multiplier run.
    pub k_residual: f64,
    /// Largest deviation in `r` and in `φ` at the multiplier samples.
    pub max_dr: f64,
    pub max_dphi: f64,
    /// Largest `|ż − f(z)|/max(1, |f(z)|)` of the projected multiplier
    /// states `z`, with `ż` from the multiplier equations and `f` the
    /// partially Lagrangian vector field.
    pub field_residual: f64,
    /// Largest deviation in `(r, φ)` from a Newtonian run (only for `c = 0`).
    pub kepler_deviation: Option<f64>,
    /// `(λ̇, E_λ)` at fixed `(r, ṙ, φ, φ̇)` of the initial state.
    pub energies: Vec<(f64, f64)>,
    pub steps: usize,
}

/// Velocity of the projection `(r, φ, M, mṙ, p₁)` of a multiplier state,
/// compared with the partially Lagrangian vector field there.
fn projected_field_defect(
    ms: &MultiplierSystem,
    hs: &crate::hamiltonize::HamiltonianSystem,
    y: &[f64],
) -> Result<f64, CentralError> {
    let mut dy = [0.0; 6];
    ms.rhs(0.0, y, &mut dy)?;
    let z = ms.partially_lagrangian_state(y);
    let (r, rdot, p1) = (z[0], y[1], z[4]);
    // M and K are constant, so ṗ₁ = d/dt 8(K − M²/4m)/r³ = −3p₁ṙ/r
    let zdot = [dy[0], dy[2], 0.0, ms.params.m * dy[1], -3.0 * p1 * rdot / r];
    let f = hs.rhs(&z)?;
    Ok(zdot
        .iter()
        .zip(&f)
        .map(|(a, b)| (a - b).abs() / b.abs().max(1.0))
        .fold(0.0, f64::max))
}

/// Integrate the multiplier system from `(r, ṙ, φ, φ̇, c)` and the partially
/// Lagrangian system from the projected state, and compare.
pub fn compare_multiplier(
    params: &CentralFieldParams,
    state: [f64; 4],
    c: f64,
    t_end: f64,
    rtol: f64,
    lambda_dots: &[f64],
) -> Result<MultiplierComparison, CentralError> {
    let [r, rdot, phi, phidot] = state;
    let ms = MultiplierSystem::new(params)?;
    let y0 = ms.state(r, rdot, phi, phidot, c);
    let opts = IntegrateOptions {
        rtol,
        atol: rtol * 1e-2,
        ..Default::default()
    };
    let mult = integrate(&ms, &y0, (0.0, t_end), &opts)?;

    let z0 = ms.partially_lagrangian_state(&y0);
    let big_m = z0[2];
    let k = c * big_m / (4.0 * params.m);
    let pl_params =
        params
            .clone()
            .with_orbit(big_m, params.energy_from_kinematics(r, rdot, big_m, k)?, k);
    let hs = hamiltonian_system(&pl_params)?;
    let pl = integrate(&hs, &z0, (0.0, t_end), &opts)?;

    let t_common = mult.t_end().min(pl.t_end());
    let mut out = MultiplierComparison {
        c,
        k,
        k_residual: 0.0,
        max_dr: 0.0,
        max_dphi: 0.0,
        field_residual: 0.0,
        kepler_deviation: None,
        energies: Vec::new(),
        steps: mult.len(),
    };
    for (t, y) in mult.t.iter().zip(&mult.z).filter(|(t, _)| **t <= t_common) {
        let z = pl.eval(*t)?;
        out.max_dr = out.max_dr.max((y[0] - z[0]).abs());
        out.max_dphi = out.max_dphi.max((y[2] - z[1]).abs());
        out.k_residual = out.k_residual.max((ms.measured_k(y)? - k).abs());
        out.field_residual = out.field_residual.max(projected_field_defect(&ms, &hs, y)?);
    }
    if c == 0.0 {
        let kep = integrate(&kepler_system(params)?, &y0[..4], (0.0, t_end), &opts)?;
        let t_k = kep.t_end().min(pl.t_end());
        let mut worst = 0.0_f64;
        for (t, y) in kep.t.iter().zip(&kep.z).filter(|(t, _)| **t <= t_k) {
            let z = pl.eval(*t)?;
            worst = worst.max((y[0] - z[0]).abs()).max((y[2] - z[1]).abs());
        }
        out.kepler_deviation = Some(worst);
    }
    for &ld in lambda_dots {
        let mut y = y0.clone();
        y[5] = ld;
        out.energies.push((ld, ms.energy(&y)?));
    }
    Ok(out)
}
