use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::Args;
use condext::central_field::{classify as classify_orbit, compare_multiplier, CentralFieldParams};
use condext::config::ModelConfig;
use condext::dofcount::{self, InvolutiveTable};
use condext::dynamics::{integrate as run_ode, Termination, Trajectory};
use condext::hamiltonize::{
    drift_compatibility, jacobi_residual, min_hessian_det, HamError, HamiltonianSystem,
};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::model::{load, number, numbers};
use crate::{csv, ModelArgs, Reported};

fn print_json(v: &Value) {
    println!(
        "{}",
        serde_json::to_string_pretty(v).expect("json values serialize")
    );
}

fn regime_name(hs: &HamiltonianSystem) -> &'static str {
    let cl = &hs.closure;
    if cl.m_bar() == cl.m {
        "integrable"
    } else if hs.is_one_step() {
        "one-step"
    } else if cl.pure_gauge {
        "pure-gauge"
    } else {
        "general"
    }
}

pub fn closure(args: &ModelArgs) -> anyhow::Result<()> {
    let cfg = load(args)?;
    let hs = cfg.hamiltonian_system()?;
    let cl = &hs.closure;
    let residual = cl.max_residual()?;
    let declared = cfg.regime.map(|r| r.holds(cl)).transpose()?;
    let added: Vec<Value> = cl
        .log
        .iter()
        .map(|g| json!({"field": format!("Z{}", g.index + 1), "from": g.provenance.to_string(), "sweep": g.sweep, "novelty": g.novelty}))
        .collect();
    if args.json {
        print_json(&json!({
            "model": cfg.name,
            "n": cl.n(),
            "m": cl.m,
            "m_bar": cl.m_bar(),
            "pure_gauge": cl.pure_gauge,
            "one_step": hs.is_one_step(),
            "regime": regime_name(&hs),
            "declared_regime_holds": declared,
            "added": added,
            "samples": cl.samples.len(),
            "max_residual": residual,
            "closure_tol": cl.options.closure_tol,
        }));
        return Ok(());
    }
    println!("model: {}", cfg.name);
    println!("n = {}, m = {}, m_bar = {}", cl.n(), cl.m, cl.m_bar());
    println!("regime: {}", regime_name(&hs));
    if let (Some(r), Some(ok)) = (cfg.regime, declared) {
        println!(
            "declared {r:?}: {}",
            if ok { "holds" } else { "does not hold" }
        );
    }
    for g in &cl.log {
        println!(
            "  Z{} = {}  (sweep {}, novelty {:.3e})",
            g.index + 1,
            g.provenance,
            g.sweep,
            g.novelty
        );
    }
    println!(
        "max bracket residual over {} samples: {residual:.3e} (tol {:.1e})",
        cl.samples.len(),
        cl.options.closure_tol
    );
    Ok(())
}

pub fn hamiltonize(args: &ModelArgs, at: Option<&[String]>) -> anyhow::Result<()> {
    let cfg = load(args)?;
    let hs = cfg.hamiltonian_system()?;
    let z = match at {
        Some(v) => numbers(v)?,
        None => cfg.integrate.state.clone(),
    };
    if z.len() != hs.dim() {
        bail!(
            "phase point has {} entries, {} expects {} ({})",
            z.len(),
            cfg.name,
            hs.dim(),
            hs.coordinate_names().join(",")
        );
    }
    let (pi, drift) = hs.poisson_and_drift::<f64>(&z)?;
    let h = hs.hamiltonian(&z)?;
    let u = hs.control(&z)?;
    let rhs = hs.rhs(&z)?;
    let names = hs.coordinate_names();
    if args.json {
        print_json(&json!({
            "model": cfg.name,
            "coordinates": names,
            "regime": regime_name(&hs),
            "z": z,
            "hamiltonian": h,
            "control": u,
            "poisson": pi,
            "drift": drift,
            "rhs": rhs,
        }));
        return Ok(());
    }
    println!("model: {} ({})", cfg.name, regime_name(&hs));
    println!("coordinates: {}", names.join(" "));
    println!("z = {z:?}");
    println!("H = {h:.16e}");
    println!("u = {u:?}");
    println!("bracket {{z^a, z^b}}:");
    for row in &pi {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:>12.5e}")).collect();
        println!("  {}", cells.join(" "));
    }
    println!("drift = {drift:?}");
    println!("dz/dt = {rhs:?}");
    Ok(())
}

#[derive(Args, Debug)]
pub struct IntegrateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Initial phase point `x1,..,xn,p1,..`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub state: Option<Vec<String>>,
    /// Central field only: initial `r,rdot,phi,M,K`.
    #[arg(
        long,
        value_delimiter = ',',
        allow_hyphen_values = true,
        conflicts_with = "state"
    )]
    pub kinematics: Option<Vec<String>>,
    #[arg(long, value_parser = number, allow_hyphen_values = true)]
    pub t_start: Option<f64>,
    #[arg(long, value_parser = number, allow_hyphen_values = true)]
    pub t_end: Option<f64>,
    /// Largest accepted step.
    #[arg(long, value_parser = number)]
    pub h_max: Option<f64>,
    /// CSV destination; stdout when absent. With `--sweep` this is the stem
    /// of the numbered per-run files.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Write a gnuplot script that plots the CSV output.
    #[arg(long, requires = "output")]
    pub plot_script: Option<PathBuf>,
    /// `NAME=a:b:n`: run `n` evenly spaced values of a parameter, a phase
    /// coordinate (`x1`, `p2`, ...) or, for the central field, one of
    /// `r, rdot, phi, M, K`.
    #[arg(long, requires = "output", allow_hyphen_values = true)]
    pub sweep: Option<String>,
}

const KINEMATIC: [&str; 5] = ["r", "rdot", "phi", "M", "K"];

/// `(r, ṙ, φ, M, K)` of a central-field phase point.
fn kinematics_of(m: f64, z: &[f64]) -> [f64; 5] {
    let (r, phi, big_m, p, p1) = (z[0], z[1], z[2], z[3], z[4]);
    [
        r,
        p / m,
        phi,
        big_m,
        big_m * big_m / (4.0 * m) + r.powi(3) / 8.0 * p1,
    ]
}

fn central_state(cfg: &ModelConfig, kin: [f64; 5]) -> Vec<f64> {
    let params = CentralFieldParams {
        m: cfg.params["m"],
        ..Default::default()
    };
    params.state(kin[0], kin[1], kin[2], kin[3], kin[4])
}

fn is_central(cfg: &ModelConfig) -> bool {
    cfg.name == "central-field" && cfg.n() == 3 && cfg.params.contains_key("m")
}

/// Phase coordinate index of `x3`, `p1`, ... .
fn coordinate_index(name: &str, n: usize) -> Option<usize> {
    let (offset, digits) = match name.split_at_checked(1)? {
        ("x", d) => (0, d),
        ("p", d) => (n, d),
        _ => return None,
    };
    let k: usize = digits.parse().ok()?;
    (k >= 1).then(|| offset + k - 1)
}

struct Run {
    label: String,
    cfg: ModelConfig,
    state: Vec<f64>,
}

fn sweep_values(arg: &str) -> anyhow::Result<(String, Vec<f64>)> {
    let (name, range) = arg
        .split_once('=')
        .ok_or_else(|| anyhow!("sweep `{arg}` is not NAME=a:b:n"))?;
    let parts: Vec<&str> = range.split(':').collect();
    let [a, b, n] = parts.as_slice() else {
        bail!("sweep range `{range}` is not a:b:n")
    };
    let (a, b) = (
        number(a).map_err(|e| anyhow!(e))?,
        number(b).map_err(|e| anyhow!(e))?,
    );
    let n: usize = n
        .trim()
        .parse()
        .with_context(|| format!("sweep count `{n}`"))?;
    if n == 0 {
        bail!("sweep count must be positive");
    }
    let values = (0..n)
        .map(|k| {
            if n == 1 {
                a
            } else {
                a + (b - a) * k as f64 / (n - 1) as f64
            }
        })
        .collect();
    Ok((name.trim().to_string(), values))
}

fn plan(args: &IntegrateArgs, cfg: &ModelConfig) -> anyhow::Result<Vec<Run>> {
    let mut base = cfg.integrate.state.clone();
    if let Some(s) = &args.state {
        base = numbers(s)?;
    }
    if let Some(k) = &args.kinematics {
        if !is_central(cfg) {
            bail!("--kinematics applies to the central field only");
        }
        let v = numbers(k)?;
        let kin: [f64; 5] = v
            .try_into()
            .map_err(|v: Vec<f64>| anyhow!("--kinematics takes 5 values, got {}", v.len()))?;
        base = central_state(cfg, kin);
    }
    let Some(arg) = &args.sweep else {
        return Ok(vec![Run {
            label: cfg.name.clone(),
            cfg: cfg.clone(),
            state: base,
        }]);
    };
    let (name, values) = sweep_values(arg)?;
    let n = cfg.n();
    values
        .into_iter()
        .map(|v| {
            let mut cfg = cfg.clone();
            let mut state = base.clone();
            if let Some(j) = KINEMATIC.iter().position(|k| *k == name) {
                if !is_central(&cfg) || state.len() != 5 {
                    bail!("sweep over `{name}` needs the central field");
                }
                let mut kin = kinematics_of(cfg.params["m"], &state);
                kin[j] = v;
                state = central_state(&cfg, kin);
            } else if let Some(i) = coordinate_index(&name, n) {
                let slot = state.get_mut(i).ok_or_else(|| {
                    anyhow!("no coordinate `{name}` in a state of length {}", base.len())
                })?;
                *slot = v;
            } else {
                cfg.set_param(&name, v)?;
            }
            Ok(Run {
                label: format!("{name}={v}"),
                cfg,
                state,
            })
        })
        .collect()
}

struct Outcome {
    traj: Option<Trajectory>,
    failure: Option<String>,
}

fn execute(args: &IntegrateArgs, run: &Run) -> anyhow::Result<(HamiltonianSystem, Outcome)> {
    let mut cfg = run.cfg.clone();
    if args.h_max.is_some() {
        cfg.integrate.h_max = args.h_max;
    }
    let hs = cfg.hamiltonian_system()?;
    let opts = cfg.integrate_options(&hs)?;
    let t0 = args.t_start.unwrap_or(cfg.integrate.t_start);
    let t1 = args
        .t_end
        .or(cfg.integrate.t_end)
        .ok_or_else(|| anyhow!("no end time: pass --t-end"))?;
    let out = match run_ode(&hs, &run.state, (t0, t1), &opts) {
        Ok(traj) => {
            let failure = match &traj.termination {
                Termination::Failed(msg) => Some(msg.clone()),
                _ => None,
            };
            Outcome {
                traj: Some(traj),
                failure,
            }
        }
        Err(e) => Outcome {
            traj: None,
            failure: Some(e.to_string()),
        },
    };
    Ok((hs, out))
}

fn sweep_file(stem: &Path, index: usize) -> PathBuf {
    let base = stem.with_extension("");
    let ext = stem.extension().and_then(|e| e.to_str()).unwrap_or("csv");
    PathBuf::from(format!("{}.{index:03}.{ext}", base.display()))
}

fn termination_text(t: &Termination) -> String {
    match t {
        Termination::Running => "running".into(),
        Termination::End => "end".into(),
        Termination::Event(name) => format!("event {name}"),
        Termination::Failed(msg) => format!("failed: {msg}"),
    }
}

pub fn integrate(args: &IntegrateArgs) -> anyhow::Result<()> {
    let cfg = load(&args.model)?;
    let runs = plan(args, &cfg)?;
    let files: Vec<Option<PathBuf>> = match (&args.output, args.sweep.is_some()) {
        (Some(o), true) => (0..runs.len()).map(|k| Some(sweep_file(o, k))).collect(),
        (o, _) => vec![o.clone()],
    };
    let results: Vec<anyhow::Result<(HamiltonianSystem, Outcome)>> =
        runs.par_iter().map(|r| execute(args, r)).collect();

    let mut failed = false;
    let mut summary = Vec::new();
    for ((run, file), result) in runs.iter().zip(&files).zip(results) {
        let (hs, out) = result.with_context(|| run.label.clone())?;
        if let Some(traj) = &out.traj {
            let names = hs.coordinate_names();
            match file {
                Some(path) => {
                    let f = File::create(path)
                        .with_context(|| format!("creating {}", path.display()))?;
                    let mut w = BufWriter::new(f);
                    csv::write_trajectory(&mut w, &names, traj)?;
                    w.flush()?;
                }
                None => {
                    let stdout = io::stdout();
                    let mut w = BufWriter::new(stdout.lock());
                    csv::write_trajectory(&mut w, &names, traj)?;
                    w.flush()?;
                }
            }
        }
        if let Some(message) = &out.failure {
            failed = true;
            let (t, z) = out
                .traj
                .as_ref()
                .map(|tr| (Some(tr.t_end()), Some(tr.last().to_vec())))
                .unwrap_or((None, None));
            let diag = json!({
                "status": "failed",
                "model": run.cfg.name,
                "run": run.label,
                "message": message,
                "t": t,
                "state": z,
                "output": file.as_ref().map(|p| p.display().to_string()),
            });
            eprintln!("{diag}");
        }
        if let (Some(path), Some(traj)) = (file, &out.traj) {
            let drift: serde_json::Map<String, Value> = traj
                .ledger_names
                .iter()
                .map(|n| (n.clone(), json!(traj.relative_drift(n))))
                .collect();
            summary.push(json!({
                "run": run.label,
                "output": path.display().to_string(),
                "termination": termination_text(&traj.termination),
                "t_end": traj.t_end(),
                "samples": traj.len(),
                "rejected": traj.rejected,
                "events": traj.events.iter().map(|e| json!({"name": e.name, "t": e.t})).collect::<Vec<_>>(),
                "relative_drift": drift,
            }));
        }
    }

    if let Some(script) = &args.plot_script {
        let paths: Vec<&Path> = files.iter().flatten().map(PathBuf::as_path).collect();
        std::fs::write(script, csv::plot_script(&paths, cfg.n(), is_central(&cfg)))
            .with_context(|| format!("writing {}", script.display()))?;
    }
    if args.output.is_some() {
        if args.model.json {
            print_json(&Value::Array(summary));
        } else {
            for s in &summary {
                println!(
                    "{}: {} at t = {} ({} samples) -> {}",
                    s["run"].as_str().unwrap_or(""),
                    s["termination"].as_str().unwrap_or(""),
                    s["t_end"],
                    s["samples"],
                    s["output"].as_str().unwrap_or("")
                );
            }
        }
    }
    if failed {
        return Err(Reported.into());
    }
    Ok(())
}

pub fn check(args: &ModelArgs, samples: usize, tol: f64) -> anyhow::Result<()> {
    let cfg = load(args)?;
    let hs = cfg.hamiltonian_system()?;
    let points = hs.phase_samples(samples);
    let closure_tol = hs.closure.options.closure_tol;

    let worst = |f: &dyn Fn(&[f64]) -> Result<f64, HamError>| -> Result<f64, HamError> {
        points.iter().try_fold(0.0_f64, |acc, z| Ok(acc.max(f(z)?)))
    };
    let verdict = |name: &str, value: Result<f64, String>, tol: f64, upper: bool| match value {
        Ok(v) => {
            json!({"check": name, "value": v, "tol": tol, "pass": if upper { v <= tol } else { v > tol }})
        }
        Err(e) => json!({"check": name, "error": e, "tol": tol, "pass": false}),
    };

    let jacobi = worst(&|z| jacobi_residual(&hs, z)).map_err(|e| e.to_string());
    let drift = worst(&|z| drift_compatibility(&hs, z)).map_err(|e| e.to_string());
    let hessian_tol = cfg.tolerances.hessian_tol;
    let hessian = points
        .iter()
        .map(|z| Ok((z[..hs.n()].to_vec(), hs.control(z)?)))
        .collect::<Result<Vec<_>, HamError>>()
        .and_then(|pts| min_hessian_det(&hs.system, &pts))
        .map_err(|e| e.to_string());
    let closure = hs.closure.max_residual().map_err(|e| e.to_string());

    let checks = vec![
        verdict("jacobi", jacobi, tol, true),
        verdict("drift-compatibility", drift, tol, true),
        verdict("hessian-regularity", hessian, hessian_tol, false),
        verdict("closure-residual", closure, closure_tol, true),
    ];
    let all = checks.iter().all(|c| c["pass"] == json!(true));
    print_json(&json!({"model": cfg.name, "samples": points.len(), "pass": all, "checks": checks}));
    Ok(())
}

#[derive(Args, Debug)]
pub struct ClassifyArgs {
    #[arg(long, default_value = "1", value_parser = number)]
    pub m: f64,
    #[arg(long, default_value = "1", value_parser = number)]
    pub alpha: f64,
    /// Angular momentum.
    #[arg(long = "M", default_value = "1", value_parser = number, allow_hyphen_values = true)]
    pub angular_momentum: f64,
    /// Energy.
    #[arg(long = "E", value_parser = number, allow_hyphen_values = true, required_unless_present = "gamma")]
    pub energy: Option<f64>,
    /// The third integral `K`.
    #[arg(long = "K", value_parser = number, allow_hyphen_values = true, required_unless_present = "gamma")]
    pub k: Option<f64>,
    /// Build the orbit from its shape instead: precession factor.
    #[arg(long, value_parser = number, requires = "e", conflicts_with_all = ["energy", "k"])]
    pub gamma: Option<f64>,
    /// Eccentricity, with `--gamma`.
    #[arg(long, value_parser = number, requires = "gamma")]
    pub e: Option<f64>,
    /// With `--gamma`: the spiral branch instead of the conic one.
    #[arg(long, requires = "gamma")]
    pub spiral: bool,
    #[arg(long)]
    pub json: bool,
}

pub fn classify(args: &ClassifyArgs) -> anyhow::Result<()> {
    let params =
        match (args.gamma, args.e, args.energy, args.k) {
            (Some(g), Some(e), _, _) => CentralFieldParams::from_shape(
                args.m,
                args.alpha,
                args.angular_momentum,
                g,
                e,
                !args.spiral,
            ),
            (_, _, Some(energy), Some(k)) => CentralFieldParams::kepler(args.m, args.alpha)
                .with_orbit(args.angular_momentum, energy, k),
            _ => bail!("give either --E and --K or --gamma and --e"),
        };
    let cls = classify_orbit(&params)?;
    let critical_k = params.angular_momentum.powi(2) / (8.0 * params.m);
    if args.json {
        print_json(&json!({
            "tag": cls.tag.to_string(),
            "m": params.m,
            "alpha": params.alpha,
            "M": params.angular_momentum,
            "E": params.energy,
            "K": params.k,
            "critical_K": critical_k,
            "gamma": cls.gamma,
            "e": cls.e,
            "p": cls.p_latus,
            "apsidal_angle": cls.apsidal_period(),
            "perihelion": cls.perihelion(),
        }));
        return Ok(());
    }
    println!("{}", cls.tag);
    println!(
        "M = {}, E = {}, K = {} (critical {critical_k})",
        params.angular_momentum, params.energy, params.k
    );
    println!("gamma = {}", cls.gamma);
    println!("e = {}", cls.e);
    println!("p = {}", cls.p_latus);
    if let Some(r) = cls.perihelion() {
        println!(
            "perihelion r = {r}, apsidal angle = {}",
            cls.apsidal_period()
        );
    }
    Ok(())
}

pub fn dof(table: &str, json_out: bool) -> anyhow::Result<()> {
    let path = Path::new(table);
    let t = if path.is_file() {
        let src =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        InvolutiveTable::from_toml(&src).with_context(|| format!("in {}", path.display()))?
    } else {
        dofcount::fixture(table)
            .with_context(|| format!("fixtures: {}", dofcount::FIXTURES.join(", ")))?
    };
    let n = dofcount::dof(&t);
    if json_out {
        print_json(&json!({"label": t.label, "dof": n}));
    } else {
        println!("{n}");
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    /// Values of `c = m r² λ̇`.
    #[arg(
        long,
        value_delimiter = ',',
        allow_hyphen_values = true,
        default_value = "0,0.1,0.5"
    )]
    pub c: Vec<String>,
    /// Initial `r,rdot,phi,phidot`.
    #[arg(
        long,
        value_delimiter = ',',
        allow_hyphen_values = true,
        default_value = "1,0.1,0,1.2"
    )]
    pub state: Vec<String>,
    #[arg(long, default_value = "10", value_parser = number)]
    pub t_end: f64,
    #[arg(long, default_value = "1e-13", value_parser = number)]
    pub rtol: f64,
    /// `λ̇` values at which the multiplier energy is reported.
    #[arg(long, value_delimiter = ',', default_value = "10,100,1000")]
    pub lambda_dots: Vec<String>,
    #[arg(long, default_value = "1", value_parser = number)]
    pub m: f64,
    #[arg(long, default_value = "1", value_parser = number)]
    pub alpha: f64,
    #[arg(long)]
    pub json: bool,
}

pub fn compare(args: &CompareArgs) -> anyhow::Result<()> {
    let cs = numbers(&args.c)?;
    let state: [f64; 4] = numbers(&args.state)?
        .try_into()
        .map_err(|v: Vec<f64>| anyhow!("--state takes 4 values, got {}", v.len()))?;
    let lds = numbers(&args.lambda_dots)?;
    let params = CentralFieldParams::kepler(args.m, args.alpha);
    let rows = cs
        .par_iter()
        .map(|&c| {
            compare_multiplier(&params, state, c, args.t_end, args.rtol, &lds)
                .map_err(anyhow::Error::from)
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    if args.json {
        let v: Vec<Value> = rows
            .iter()
            .map(|r| {
                json!({
                    "c": r.c,
                    "K": r.k,
                    "k_residual": r.k_residual,
                    "max_dr": r.max_dr,
                    "max_dphi": r.max_dphi,
                    "field_residual": r.field_residual,
                    "kepler_deviation": r.kepler_deviation,
                    "energies": r.energies.iter().map(|(l, e)| json!({"lambda_dot": l, "E": e})).collect::<Vec<_>>(),
                    "steps": r.steps,
                })
            })
            .collect();
        print_json(&Value::Array(v));
        return Ok(());
    }
    println!(
        "{:>8} {:>12} {:>10} {:>10} {:>10} {:>10}  E(lambda_dot)",
        "c", "K", "|dK|", "|dr|", "|dphi|", "field"
    );
    for r in &rows {
        let e: Vec<String> = r
            .energies
            .iter()
            .map(|(l, e)| format!("{l}:{e:.4e}"))
            .collect();
        println!(
            "{:>8} {:>12.6e} {:>10.2e} {:>10.2e} {:>10.2e} {:>10.2e}  {}",
            r.c,
            r.k,
            r.k_residual,
            r.max_dr,
            r.max_dphi,
            r.field_residual,
            e.join(" ")
        );
        if let Some(d) = r.kepler_deviation {
            println!("{:>8} Newtonian deviation {d:.2e}", "");
        }
    }
    Ok(())
}
