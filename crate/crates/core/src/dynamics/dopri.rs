//! Dormand–Prince 5(4) with the fourth-order dense output of Hairer,
//! Nørsett & Wanner and a PI step-size controller.

use super::{DynError, Event, EventRecord, IntegrateOptions, OdeSystem, Termination, Trajectory};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

/// One accepted step with its interpolation coefficients.
#[derive(Debug, Clone)]
pub struct DenseStep {
    pub t0: f64,
    pub h: f64,
    rcont: [Vec<f64>; 5],
}

impl DenseStep {
    /// State at `t` in `[t0, t0 + h]`.
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let s = (t - self.t0) / self.h;
        let s1 = 1.0 - s;
        let [r1, r2, r3, r4, r5] = &self.rcont;
        (0..r1.len())
            .map(|i| r1[i] + s * (r2[i] + s1 * (r3[i] + s * (r4[i] + s1 * r5[i]))))
            .collect()
    }

    pub(crate) fn scale_component(&mut self, index: usize, factor: f64) {
        for r in &mut self.rcont {
            r[index] *= factor;
        }
    }

    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }
}

fn axpy(out: &mut [f64], y: &[f64], h: f64, terms: &[(f64, &[f64])]) {
    for i in 0..out.len() {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        out[i] = y[i] + h * acc;
    }
}

fn eval_rhs(sys: &dyn OdeSystem, t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), DynError> {
    sys.rhs(t, y, dy)?;
    if dy.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(DynError::NonFinite {
            t,
            state: y.to_vec(),
        })
    }
}

fn error_norm(y0: &[f64], y1: &[f64], err: &[f64], opts: &IntegrateOptions) -> f64 {
    let n = y0.len();
    let sum: f64 = (0..n)
        .map(|i| {
            let sk = opts.atol + opts.rtol * y0[i].abs().max(y1[i].abs());
            (err[i] / sk).powi(2)
        })
        .sum();
    (sum / n as f64).sqrt()
}

/// Starting step from the size of `f` and a second-derivative estimate.
fn initial_step(
    sys: &dyn OdeSystem,
    t0: f64,
    y0: &[f64],
    f0: &[f64],
    opts: &IntegrateOptions,
    h_max: f64,
) -> Result<f64, DynError> {
    let n = y0.len();
    let sk: Vec<f64> = y0.iter().map(|y| opts.atol + opts.rtol * y.abs()).collect();
    let rms = |v: &[f64]| {
        (v.iter().zip(&sk).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / n as f64).sqrt()
    };
    let dnf = rms(f0);
    let dny = rms(y0);
    let mut h = if dnf <= 1e-10 || dny <= 1e-10 {
        1e-6
    } else {
        0.01 * dny / dnf
    };
    h = h.min(h_max);
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, f)| y + h * f).collect();
    let mut f1 = vec![0.0; n];
    eval_rhs(sys, t0 + h, &y1, &mut f1)?;
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let der2 = rms(&diff) / h;
    let der12 = dnf.max(der2);
    let h1 = if der12 <= 1e-15 {
        (h * 1e-3).max(1e-6)
    } else {
        (0.01 / der12).powf(0.2)
    };
    Ok((100.0 * h).min(h1).min(h_max))
}

struct Stages {
    k: [Vec<f64>; 7],
    ytmp: Vec<f64>,
    y1: Vec<f64>,
}

impl Stages {
    fn new(n: usize) -> Self {
        Self {
            k: std::array::from_fn(|_| vec![0.0; n]),
            ytmp: vec![0.0; n],
            y1: vec![0.0; n],
        }
    }

    /// Stages 2..7 from `k[0] = f(t, y)`; the last stage is `f(t + h, y1)`.
    fn step(&mut self, sys: &dyn OdeSystem, t: f64, y: &[f64], h: f64) -> Result<(), DynError> {
        let [k1, k2, k3, k4, k5, k6, k7] = &mut self.k;
        axpy(&mut self.ytmp, y, h, &[(A21, k1)]);
        eval_rhs(sys, t + C2 * h, &self.ytmp, k2)?;
        axpy(&mut self.ytmp, y, h, &[(A31, k1), (A32, k2)]);
        eval_rhs(sys, t + C3 * h, &self.ytmp, k3)?;
        axpy(&mut self.ytmp, y, h, &[(A41, k1), (A42, k2), (A43, k3)]);
        eval_rhs(sys, t + C4 * h, &self.ytmp, k4)?;
        axpy(
            &mut self.ytmp,
            y,
            h,
            &[(A51, k1), (A52, k2), (A53, k3), (A54, k4)],
        );
        eval_rhs(sys, t + C5 * h, &self.ytmp, k5)?;
        axpy(
            &mut self.ytmp,
            y,
            h,
            &[(A61, k1), (A62, k2), (A63, k3), (A64, k4), (A65, k5)],
        );
        eval_rhs(sys, t + h, &self.ytmp, k6)?;
        axpy(
            &mut self.y1,
            y,
            h,
            &[(A71, k1), (A73, k3), (A74, k4), (A75, k5), (A76, k6)],
        );
        eval_rhs(sys, t + h, &self.y1, k7)
    }

    fn error(&self, h: f64) -> Vec<f64> {
        let [k1, _, k3, k4, k5, k6, k7] = &self.k;
        (0..k1.len())
            .map(|i| {
                h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i])
            })
            .collect()
    }

    fn dense(&self, t0: f64, y0: &[f64], h: f64) -> DenseStep {
        let [k1, _, k3, k4, k5, k6, k7] = &self.k;
        let n = y0.len();
        let mut rcont: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; n]);
        for i in 0..n {
            let ydiff = self.y1[i] - y0[i];
            let bspl = h * k1[i] - ydiff;
            rcont[0][i] = y0[i];
            rcont[1][i] = ydiff;
            rcont[2][i] = bspl;
            rcont[3][i] = ydiff - h * k7[i] - bspl;
            rcont[4][i] =
                h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
        }
        DenseStep { t0, h, rcont }
    }
}

fn triggered(event: &Event, g0: f64, g1: f64) -> bool {
    use super::Direction::*;
    match event.direction {
        Rising => g0 < 0.0 && g1 >= 0.0,
        Falling => g0 > 0.0 && g1 <= 0.0,
        Either => (g0 < 0.0 && g1 >= 0.0) || (g0 > 0.0 && g1 <= 0.0),
    }
}

/// Bisection on the dense output for the zero of `g` in the step.
fn locate(event: &Event, step: &DenseStep, g0: f64, tol: f64) -> (f64, Vec<f64>) {
    let (mut a, mut b) = (step.t0, step.t1());
    let mut ga = g0;
    while b - a > tol {
        let mid = 0.5 * (a + b);
        let gm = (event.g)(mid, &step.eval(mid));
        if (ga < 0.0) == (gm < 0.0) && gm != 0.0 {
            a = mid;
            ga = gm;
        } else {
            b = mid;
        }
    }
    (b, step.eval(b))
}

/// Integrate `sys` from `y0` over `t_span`.
///
/// Failures (step underflow, non-finite values, step budget) end the
/// trajectory early with [`Termination::Failed`]; the samples up to that
/// point are kept.
pub fn integrate(
    sys: &dyn OdeSystem,
    y0: &[f64],
    t_span: (f64, f64),
    opts: &IntegrateOptions,
) -> Result<Trajectory, DynError> {
    let (t0, t_end) = t_span;
    let n = sys.dim();
    if y0.len() != n {
        return Err(DynError::Dimension {
            expected: n,
            got: y0.len(),
        });
    }
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(DynError::NonFinite {
            t: t0,
            state: y0.to_vec(),
        });
    }
    if t_end.partial_cmp(&t0) != Some(std::cmp::Ordering::Greater) {
        return Err(DynError::Invalid(format!(
            "empty time span [{t0}, {t_end}]"
        )));
    }
    let mut traj = Trajectory::new(n, &opts.invariants);
    traj.push(t0, y0.to_vec(), 0.0, 0.0)?;

    let h_max = opts.h_max.unwrap_or(t_end - t0).min(t_end - t0);
    let mut stages = Stages::new(n);
    let mut t = t0;
    let mut y = y0.to_vec();
    eval_rhs(sys, t, &y, &mut stages.k[0])?;
    let mut h = match opts.h0 {
        Some(h) => h.min(h_max),
        None => initial_step(sys, t, &y, &stages.k[0].clone(), opts, h_max)?,
    };
    let mut g_prev: Vec<f64> = opts.events.iter().map(|e| (e.g)(t, &y)).collect();
    let mut facold: f64 = 1e-4;
    let mut last_rejected = false;
    let mut steps = 0usize;

    loop {
        if steps >= opts.max_steps {
            traj.termination = Termination::Failed(format!(
                "step budget of {} exhausted at t = {t}",
                opts.max_steps
            ));
            return Ok(traj);
        }
        if h.abs() <= opts.h_min.max(t.abs() * f64::EPSILON * 10.0) {
            traj.termination =
                Termination::Failed(format!("step size underflow (h = {h:e}) at t = {t}"));
            return Ok(traj);
        }
        let final_step = t + h >= t_end;
        if final_step {
            h = t_end - t;
        }
        steps += 1;
        let err = match stages.step(sys, t, &y, h) {
            Ok(()) => error_norm(&y, &stages.y1, &stages.error(h), opts),
            // an evaluation failure inside the step counts as a rejection
            Err(_) => f64::INFINITY,
        };
        if !err.is_finite() || err > 1.0 {
            let fac = if err.is_finite() {
                (err.powf(0.2 - BETA * 0.75) / SAFETY).min(1.0 / FAC_MIN)
            } else {
                2.0
            };
            h /= fac.max(1.0);
            last_rejected = true;
            traj.rejected += 1;
            continue;
        }
        let fac11 = err.powf(0.2 - BETA * 0.75);
        let fac = (fac11 / facold.powf(BETA) / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
        let mut h_new = (h / fac).min(h_max);
        if last_rejected {
            h_new = h_new.min(h);
        }
        facold = err.max(1e-4);
        last_rejected = false;

        let step = stages.dense(t, &y, h);
        let t1 = if final_step { t_end } else { t + h };

        // events on the accepted step
        let mut hit: Option<(usize, f64, Vec<f64>)> = None;
        for (idx, ev) in opts.events.iter().enumerate() {
            let g1 = (ev.g)(t1, &stages.y1);
            if triggered(ev, g_prev[idx], g1) {
                let (te, ye) = locate(ev, &step, g_prev[idx], opts.event_tol);
                if ev.terminal {
                    if hit.as_ref().is_none_or(|(_, th, _)| te < *th) {
                        hit = Some((idx, te, ye));
                    }
                } else {
                    traj.events.push(EventRecord {
                        name: ev.name.clone(),
                        t: te,
                        state: ye,
                    });
                }
            }
            g_prev[idx] = g1;
        }
        if let Some((idx, te, ye)) = hit {
            let mut cut = step.clone();
            cut.h = te - step.t0;
            traj.steps.push(step);
            traj.push(te, ye.clone(), cut.h, err)?;
            traj.events.push(EventRecord {
                name: opts.events[idx].name.clone(),
                t: te,
                state: ye,
            });
            traj.termination = Termination::Event(opts.events[idx].name.clone());
            return Ok(traj);
        }

        traj.steps.push(step);
        y.copy_from_slice(&stages.y1);
        t = t1;
        traj.push(t, y.clone(), h, err)?;
        if final_step {
            traj.termination = Termination::End;
            return Ok(traj);
        }
        // first-same-as-last
        let k7 = stages.k[6].clone();
        stages.k[0] = k7;
        h = h_new;
    }
}
