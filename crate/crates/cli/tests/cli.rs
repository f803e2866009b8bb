use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn condext(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_condext"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn fixture(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
        .display()
        .to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json(o: &Output) -> Value {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).unwrap()
}

fn csv_rows(text: &str) -> Vec<Vec<f64>> {
    text.lines()
        .skip(1)
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn closure_reports_the_regime() {
    let v = json(&condext(&["closure", "central-field", "--json"]));
    assert_eq!(v["m_bar"], 2);
    assert_eq!(v["regime"], "one-step");
    assert_eq!(v["added"][0]["from"], "[Z1, V]");
    let v = json(&condext(&["closure", "planar-free", "--json"]));
    assert_eq!(v["regime"], "integrable");
    let v = json(&condext(&["closure", "rotation-dilation", "--json"]));
    assert_eq!(v["pure_gauge"], true);
}

#[test]
fn hamiltonize_evaluates_at_a_point() {
    let v = json(&condext(&[
        "hamiltonize",
        "central-field",
        "--json",
        "--at",
        "1,0,1,0,0",
    ]));
    assert!((v["hamiltonian"].as_f64().unwrap() + 1.5).abs() < 1e-12);
    assert_eq!(
        v["coordinates"],
        serde_json::json!(["x1", "x2", "x3", "p1", "p2"])
    );
    assert_eq!(v["poisson"][0][3], 1.0);
}

#[test]
fn integrate_writes_deterministic_csv() {
    let args = ["integrate", "central-field", "--t-end", "2"];
    let a = condext(&args);
    let b = condext(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    assert!(!text.contains('\r'));
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "t,x1,x2,x3,p1,p2,M,E,K");
    let first = lines.next().unwrap();
    assert_eq!(first.split(',').count(), 9);
    // every value in scientific notation with 16 fractional digits
    for v in first.split(',') {
        let mantissa = v.split('e').next().unwrap();
        assert_eq!(mantissa.split('.').nth(1).unwrap().len(), 16, "{v}");
    }
    let rows = csv_rows(&text);
    assert_eq!(rows.last().unwrap()[0], 2.0);
}

#[test]
fn spiral_ends_with_an_event_trailer() {
    let o = condext(&[
        "integrate",
        "central-field",
        "--kinematics",
        "1/3,0,0,1,5/36",
        "--t-end",
        "10",
    ]);
    assert!(o.status.success());
    let text = stdout(&o);
    let last = text.lines().last().unwrap();
    assert!(last.starts_with("# event: r_min t="), "{last}");
    let t: f64 = last
        .trim_start_matches("# event: r_min t=")
        .parse()
        .unwrap();
    assert!(t > 0.0 && t < 1.0);
    let rows = csv_rows(&text);
    assert!((rows.last().unwrap()[1] - 1e-3).abs() < 1e-9);
}

#[test]
fn integrator_failure_exits_nonzero_with_json() {
    let o = condext(&["integrate", &fixture("kepler-no-floor.toml")]);
    assert_eq!(o.status.code(), Some(1));
    let diag: Value =
        serde_json::from_str(String::from_utf8_lossy(&o.stderr).lines().last().unwrap()).unwrap();
    assert_eq!(diag["status"], "failed");
    assert!(diag["message"].as_str().unwrap().contains("underflow"));
    assert!(diag["state"][0].as_f64().unwrap() < 1e-3);
}

#[test]
fn usage_and_domain_errors_have_distinct_codes() {
    assert_eq!(condext(&["integrate"]).status.code(), Some(2));
    assert_eq!(
        condext(&["closure", "central-field", "--bogus"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        condext(&["closure", "no-such-model"]).status.code(),
        Some(1)
    );
    assert_eq!(
        condext(&["closure", "central-field", "--set", "nope=1"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(condext(&["dof", "no-such-table"]).status.code(), Some(1));
}

#[test]
fn config_parse_errors_carry_a_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "name = \"bad\"\n[system\n").unwrap();
    let o = condext(&["closure", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
}

fn check(model: &str) -> Value {
    let v = json(&condext(&["check", model]));
    let mut out = serde_json::Map::new();
    for c in v["checks"].as_array().unwrap() {
        out.insert(c["check"].as_str().unwrap().to_string(), c["pass"].clone());
    }
    out.insert("all".into(), v["pass"].clone());
    Value::Object(out)
}

#[test]
fn check_reports_verdicts_and_exits_zero() {
    for name in [
        "central-field",
        "planar-free",
        "rotation-drift",
        "rotation-dilation",
        "one-step-pair",
    ] {
        assert_eq!(check(name)["all"], true, "{name}");
    }
    let lin = check(&fixture("linear-lagrangian.toml"));
    assert_eq!(lin["hessian-regularity"], false);
    assert_eq!(lin["jacobi"], true);
    let broken = check(&fixture("broken-drift.toml"));
    assert_eq!(broken["drift-compatibility"], false);
    assert_eq!(broken["jacobi"], true);
}

#[test]
fn classify_reproduces_the_figure_orbits() {
    let v = json(&condext(&[
        "classify", "--gamma", "8/7", "--e", "0.7", "--json",
    ]));
    assert_eq!(v["tag"], "PrecessingConic");
    assert!((v["K"].as_f64().unwrap() - 15.0 / 512.0).abs() < 1e-15);
    let v = json(&condext(&[
        "classify", "--gamma", "3", "--e", "1.5", "--spiral", "--json",
    ]));
    assert_eq!(v["tag"], "BoundedFallSpiral");
    assert!((v["E"].as_f64().unwrap() + 5.625).abs() < 1e-12);
    assert!((v["p"].as_f64().unwrap() - 1.0 / 9.0).abs() < 1e-15);
    let v = json(&condext(&[
        "classify", "--E", "-0.4", "--K", "0", "--M", "0.9", "--json",
    ]));
    assert_eq!(v["gamma"], 1.0);
    assert_eq!(condext(&["classify", "--E", "-1"]).status.code(), Some(2));
}

#[test]
fn dof_counts_fixtures_and_files() {
    for (name, want) in [
        ("cotton", "6"),
        ("einstein-linear", "4"),
        ("central-field", "5"),
        ("central-field-multiplier", "6"),
    ] {
        let o = condext(&["dof", name]);
        assert_eq!(stdout(&o).trim(), want, "{name}");
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ode.toml");
    std::fs::write(&path, "label = \"third order\"\nequations = {3 = 1}\n").unwrap();
    let v = json(&condext(&["dof", path.to_str().unwrap(), "--json"]));
    assert_eq!(v["dof"], 3);
}

#[test]
fn sweep_writes_one_file_per_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("orbit.csv");
    let plot = dir.path().join("orbit.gp");
    let o = condext(&[
        "integrate",
        "central-field",
        "--sweep",
        "K=0.01:0.05:3",
        "--t-end",
        "5",
        "-o",
        out.to_str().unwrap(),
        "--plot-script",
        plot.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for (k, want) in [0.01, 0.03, 0.05].into_iter().enumerate() {
        let path = dir.path().join(format!("orbit.{k:03}.csv"));
        let rows = csv_rows(&std::fs::read_to_string(&path).unwrap());
        // K is the last ledger column
        assert!((rows[0][8] - want).abs() < 1e-12, "{path:?}");
    }
    let script = std::fs::read_to_string(&plot).unwrap();
    assert!(script.contains("set polar") && script.contains("orbit.002.csv"));
}

#[test]
fn sweep_over_a_parameter() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("p.csv");
    let o = condext(&[
        "integrate",
        "planar-free",
        "--sweep",
        "k=0:1:2",
        "--t-end",
        "1",
        "-o",
        out.to_str().unwrap(),
        "--json",
    ]);
    let v = json(&o);
    assert_eq!(v.as_array().unwrap().len(), 2);
    assert_eq!(v[1]["run"], "k=1");
    assert!(v[1]["relative_drift"]["E"].as_f64().unwrap() < 1e-8);
}

#[test]
fn compare_multiplier_matches_projection() {
    let v = json(&condext(&[
        "compare-multiplier",
        "--c",
        "0.1",
        "--t-end",
        "2",
        "--json",
    ]));
    let r = &v[0];
    assert!((r["K"].as_f64().unwrap() - 0.1 * 1.2 / 4.0).abs() < 1e-15);
    assert!(r["max_dr"].as_f64().unwrap() < 1e-9);
    assert!(r["field_residual"].as_f64().unwrap() < 1e-12);
    assert!(r["kepler_deviation"].is_null());
}
