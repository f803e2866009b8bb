#![allow(clippy::needless_range_loop)]

use condext::central_field::{self, classify, CentralFieldParams, OrbitTag};
use condext::dynamics::{
    conditional_residual, euler_lagrange_residual, hamiltonian_residual, integrate, ControlSource,
    Direction, DynError, Event, IntegrateOptions, OdeSystem, ResidualOptions, ResidualSeries,
    Termination, Trajectory,
};
use condext::toy_models;
use proptest::prelude::*;

/// `ÿ = −y`.
struct Oscillator;

impl OdeSystem for Oscillator {
    fn dim(&self) -> usize {
        2
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), DynError> {
        dy[0] = y[1];
        dy[1] = -y[0];
        Ok(())
    }
}

/// `ẏ = −1/y`, which cannot be continued past `y = 0`.
struct Collapse;

impl OdeSystem for Collapse {
    fn dim(&self) -> usize {
        1
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), DynError> {
        if y[0] <= 0.0 {
            return Err(DynError::Rhs {
                t,
                message: "left the domain".into(),
            });
        }
        dy[0] = -1.0 / y[0];
        Ok(())
    }
}

fn opts(rtol: f64) -> IntegrateOptions {
    IntegrateOptions {
        rtol,
        atol: rtol * 1e-2,
        ..Default::default()
    }
}

fn oscillator_error(traj: &Trajectory) -> f64 {
    traj.t
        .iter()
        .zip(&traj.z)
        .map(|(t, z)| (z[0] - t.cos()).abs().max((z[1] + t.sin()).abs()))
        .fold(0.0, f64::max)
}

#[test]
fn oscillator_error_shrinks_with_tolerance() {
    let errs: Vec<f64> = [1e-6, 1e-8, 1e-10, 1e-12]
        .iter()
        .map(|&rtol| {
            oscillator_error(
                &integrate(&Oscillator, &[1.0, 0.0], (0.0, 20.0), &opts(rtol)).unwrap(),
            )
        })
        .collect();
    for w in errs.windows(2) {
        assert!(w[1] < w[0] / 10.0, "{errs:?}");
    }
    assert!(errs[3] < 1e-10, "{errs:?}");
}

#[test]
fn step_count_follows_fifth_order() {
    // a fifth-order pair needs about 10^(1/5) times more steps per decade
    let n6 = integrate(&Oscillator, &[1.0, 0.0], (0.0, 50.0), &opts(1e-6))
        .unwrap()
        .len() as f64;
    let n11 = integrate(&Oscillator, &[1.0, 0.0], (0.0, 50.0), &opts(1e-11))
        .unwrap()
        .len() as f64;
    let ratio = (n11 / n6).log10() / 5.0;
    assert!((0.15..0.3).contains(&ratio), "per-decade exponent {ratio}");
}

#[test]
fn dense_output_is_accurate_between_steps() {
    let traj = integrate(&Oscillator, &[1.0, 0.0], (0.0, 10.0), &opts(1e-10)).unwrap();
    let mut worst = 0.0_f64;
    for w in traj.t.windows(2) {
        for frac in [0.25, 0.5, 0.75] {
            let t = w[0] + frac * (w[1] - w[0]);
            let y = traj.eval(t).unwrap();
            worst = worst.max((y[0] - t.cos()).abs());
        }
    }
    assert!(worst < 1e-8, "{worst:e}");
    assert!(matches!(traj.eval(11.0), Err(DynError::OutOfRange { .. })));
}

#[test]
fn terminal_event_stops_at_the_root() {
    let mut o = opts(1e-10);
    o.events.push(Event::below("y=0", 0, 0.0));
    let traj = integrate(&Oscillator, &[1.0, 0.0], (0.0, 10.0), &o).unwrap();
    assert_eq!(traj.termination, Termination::Event("y=0".into()));
    assert_eq!(traj.events.len(), 1);
    let half_pi = std::f64::consts::FRAC_PI_2;
    assert!((traj.events[0].t - half_pi).abs() < 1e-10);
    assert!((traj.t_end() - half_pi).abs() < 1e-10);
}

#[test]
fn non_terminal_events_respect_direction() {
    let mut o = opts(1e-10);
    o.events
        .push(Event::new("up", Direction::Rising, false, |_, y| y[0]));
    o.events
        .push(Event::new("any", Direction::Either, false, |_, y| y[0]));
    let traj = integrate(&Oscillator, &[1.0, 0.0], (0.0, 10.0), &o).unwrap();
    assert_eq!(traj.termination, Termination::End);
    let pi = std::f64::consts::PI;
    let ups: Vec<f64> = traj
        .events
        .iter()
        .filter(|e| e.name == "up")
        .map(|e| e.t)
        .collect();
    let all = traj.events.iter().filter(|e| e.name == "any").count();
    // zeros of cos t in [0, 10]: π/2, 3π/2, 5π/2; rising only at 3π/2
    assert_eq!(all, 3);
    assert_eq!(ups.len(), 1);
    assert!((ups[0] - 1.5 * pi).abs() < 1e-9);
}

#[test]
fn leaving_the_domain_is_a_failure_not_an_error() {
    let traj = integrate(&Collapse, &[1.0], (0.0, 2.0), &opts(1e-10)).unwrap();
    assert!(
        matches!(traj.termination, Termination::Failed(_)),
        "{:?}",
        traj.termination
    );
    assert!(!traj.succeeded());
    // y² = 1 − 2t reaches zero at t = 1/2
    assert!((traj.t_end() - 0.5).abs() < 1e-3);
}

#[test]
fn bad_inputs_are_errors() {
    let o = opts(1e-8);
    assert!(matches!(
        integrate(&Oscillator, &[1.0], (0.0, 1.0), &o),
        Err(DynError::Dimension { .. })
    ));
    assert!(integrate(&Oscillator, &[f64::NAN, 0.0], (0.0, 1.0), &o).is_err());
    assert!(integrate(&Oscillator, &[1.0, 0.0], (1.0, 1.0), &o).is_err());
}

#[test]
fn circular_orbit_keeps_its_radius() {
    let cfg = toy_models::builtin("central-field").unwrap();
    let hs = cfg.hamiltonian_system().unwrap();
    let traj = integrate(
        &hs,
        &cfg.integrate.state,
        (0.0, 100.0),
        &cfg.integrate_options(&hs).unwrap(),
    )
    .unwrap();
    assert_eq!(traj.termination, Termination::End);
    let worst = traj
        .z
        .iter()
        .map(|z| (z[0] - 1.0).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-8, "{worst:e}");
    // one revolution per 2π
    assert!((traj.last()[1] - 100.0).abs() < 1e-6);
}

#[test]
fn central_field_ledger_is_conserved() {
    let p = CentralFieldParams::default();
    let hs = central_field::hamiltonian_system(&p).unwrap();
    let o = IntegrateOptions {
        invariants: central_field::ledger(&p),
        ..Default::default()
    };
    let z0 = p.state(1.3, 0.2, 0.0, 1.1, 0.03);
    let traj = integrate(&hs, &z0, (0.0, 30.0), &o).unwrap();
    for name in ["M", "E", "K"] {
        assert!(traj.relative_drift(name).unwrap() < 1e-8, "{name}");
    }
}

/// Aphelion state of the spiral fall with `γ = 3`, `e = 1.5`.
fn fall() -> (CentralFieldParams, Vec<f64>) {
    let p = CentralFieldParams::from_shape(1.0, 1.0, 1.0, 3.0, 1.5, false);
    let cls = classify(&p).unwrap();
    assert_eq!(cls.tag, OrbitTag::BoundedFallSpiral);
    let r0 = cls.p_latus / (cls.e - 1.0);
    (p.clone(), p.state(r0, 0.0, 0.0, p.angular_momentum, p.k))
}

#[test]
fn spiral_event_time_is_tolerance_independent() {
    let (p, z0) = fall();
    let hs = central_field::hamiltonian_system(&p).unwrap();
    let time = |rtol: f64| {
        let mut o = opts(rtol);
        o.events.push(Event::below("r_min", 0, 1e-3));
        let traj = integrate(&hs, &z0, (0.0, 10.0), &o).unwrap();
        assert_eq!(traj.termination, Termination::Event("r_min".into()));
        traj.events[0].t
    };
    let (coarse, fine) = (time(1e-8), time(1e-12));
    assert!((coarse - fine).abs() < 1e-6, "{coarse} vs {fine}");
}

fn common_rows(a: &ResidualSeries, b: &ResidualSeries) -> Vec<(usize, usize)> {
    a.t.iter()
        .enumerate()
        .filter_map(|(i, t)| b.t.iter().position(|s| s == t).map(|j| (i, j)))
        .collect()
}

fn column(s: &ResidualSeries, name: &str) -> usize {
    s.names.iter().position(|n| n == name).unwrap()
}

#[test]
fn planar_conditional_residual_is_euler_lagrange() {
    let cfg = toy_models::planar_free(0.7);
    let hs = cfg.hamiltonian_system().unwrap();
    let traj = integrate(
        &hs,
        &cfg.integrate.state,
        (0.0, 10.0),
        &cfg.integrate_options(&hs).unwrap(),
    )
    .unwrap();
    let ro = ResidualOptions {
        control: ControlSource::FromConstraint,
        ..Default::default()
    };
    let cond = conditional_residual(&hs, &traj, &ro).unwrap();
    let el = euler_lagrange_residual(&hs.system, &traj, &ro).unwrap();
    let rows = common_rows(&cond, &el);
    assert!(rows.len() > 50);
    for (i, j) in rows {
        for a in 0..2 {
            let c = cond.values[i][column(&cond, &format!("extremum_{}", a + 1))];
            let e = el.values[j][a];
            assert!((c - e).abs() <= 1e-10, "{c:e} vs {e:e}");
        }
    }
}

#[test]
fn pure_gauge_extremum_is_projected_euler_lagrange() {
    // extremum_α = Z^i_α (∂L̃/∂xⁱ − d/dt ∂L̃/∂ẋⁱ) for a square frame
    let cfg = toy_models::builtin("rotation-dilation").unwrap();
    let hs = cfg.hamiltonian_system().unwrap();
    let traj = integrate(
        &hs,
        &cfg.integrate.state,
        (0.0, 5.0),
        &cfg.integrate_options(&hs).unwrap(),
    )
    .unwrap();
    let ro = ResidualOptions {
        control: ControlSource::FromConstraint,
        ..Default::default()
    };
    // evaluate the orbit with a deliberately wrong momentum so both sides are large
    let bad = traj.with_scaled_component(3, 1.2).unwrap();
    for t in [&traj, &bad] {
        let cond = conditional_residual(&hs, t, &ro).unwrap();
        let el = euler_lagrange_residual(&hs.system, t, &ro).unwrap();
        for (i, j) in common_rows(&cond, &el) {
            let x = t.eval(cond.t[i]).unwrap();
            let projected = [
                -x[1] * el.values[j][0] + x[0] * el.values[j][1],
                x[0] * el.values[j][0] + x[1] * el.values[j][1],
            ];
            for a in 0..2 {
                let c = cond.values[i][column(&cond, &format!("extremum_{}", a + 1))];
                assert!(
                    (c - projected[a]).abs() < 1e-6 * (1.0 + c.abs()),
                    "{c:e} vs {:e}",
                    projected[a]
                );
            }
        }
    }
}

#[test]
fn integrable_toy_satisfies_its_equations() {
    let cfg = toy_models::builtin("rotation-drift").unwrap();
    let hs = cfg.hamiltonian_system().unwrap();
    let traj = integrate(
        &hs,
        &cfg.integrate.state,
        (0.0, 10.0),
        &cfg.integrate_options(&hs).unwrap(),
    )
    .unwrap();
    let ro = ResidualOptions::default();
    assert!(conditional_residual(&hs, &traj, &ro).unwrap().max_abs() < 1e-7);
    // the extremum equation is homogeneous in u here, so a scaled momentum
    // shows up in the constraint
    let bad = traj.with_scaled_component(3, 1.1).unwrap();
    assert!(
        conditional_residual(&hs, &bad, &ro)
            .unwrap()
            .max_abs_of("constraint")
            > 1e-3
    );
    // the drift rotates the orbit without changing the radius
    assert!(traj.relative_drift("rho2").unwrap() < 1e-9);
}

#[test]
fn one_step_toy_residual_converges_with_tolerance() {
    let cfg = toy_models::builtin("one-step-pair").unwrap();
    let hs = cfg.hamiltonian_system().unwrap();
    let ro = ResidualOptions::default();
    let run = |rtol: f64| {
        let o = IntegrateOptions {
            rtol,
            atol: rtol * 1e-2,
            ..cfg.integrate_options(&hs).unwrap()
        };
        integrate(&hs, &cfg.integrate.state, (0.0, 3.0), &o).unwrap()
    };
    let (coarse, fine) = (run(1e-10), run(1e-12));
    let rc = conditional_residual(&hs, &coarse, &ro).unwrap();
    let rf = conditional_residual(&hs, &fine, &ro).unwrap();
    // discretization error, not a defect of the equations
    assert!(rf.max_abs() < rc.max_abs() / 10.0);
    assert!(rf.max_normalized() < 1e-6, "{:e}", rf.max_normalized());
    let bad = fine.with_scaled_component(7, 1.1).unwrap();
    assert!(
        conditional_residual(&hs, &bad, &ro)
            .unwrap()
            .max_normalized()
            > 1e-3
    );
}

#[test]
fn hamiltonian_residual_vanishes_along_solutions() {
    let cfg = toy_models::builtin("one-step-pair").unwrap();
    let hs = cfg.hamiltonian_system().unwrap();
    let traj = integrate(
        &hs,
        &cfg.integrate.state,
        (0.0, 3.0),
        &cfg.integrate_options(&hs).unwrap(),
    )
    .unwrap();
    let res = hamiltonian_residual(&hs, &traj, &ResidualOptions::default()).unwrap();
    assert_eq!(res.names.len(), hs.dim());
    assert!(res.max_normalized() < 1e-6, "{:e}", res.max_normalized());
}

#[test]
fn non_square_frames_have_no_velocity_lagrangian() {
    let hs = central_field::hamiltonian_system(&CentralFieldParams::default()).unwrap();
    let traj = integrate(&hs, &[1.0, 0.0, 1.0, 0.0, -2.0], (0.0, 1.0), &opts(1e-8)).unwrap();
    assert!(matches!(
        euler_lagrange_residual(&hs.system, &traj, &ResidualOptions::default()),
        Err(DynError::Invalid(_))
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn oscillator_energy_is_kept(y0 in -2.0f64..2.0, v0 in -2.0f64..2.0, t1 in 1.0f64..20.0) {
        prop_assume!(y0.abs() + v0.abs() > 1e-3);
        let traj = integrate(&Oscillator, &[y0, v0], (0.0, t1), &opts(1e-10)).unwrap();
        let e0 = y0 * y0 + v0 * v0;
        let z = traj.last();
        prop_assert!((z[0] * z[0] + z[1] * z[1] - e0).abs() < 1e-8 * e0.max(1.0));
        prop_assert!((traj.t_end() - t1).abs() < 1e-12 * t1);
    }

    #[test]
    fn samples_are_time_ordered(t1 in 0.5f64..10.0) {
        let traj = integrate(&Oscillator, &[1.0, 0.0], (0.0, t1), &opts(1e-8)).unwrap();
        prop_assert!(traj.t.windows(2).all(|w| w[1] > w[0]));
        prop_assert_eq!(traj.t.len(), traj.z.len());
    }
}
