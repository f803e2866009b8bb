//! Trajectory CSV and gnuplot output.

use std::io::{self, Write};
use std::path::Path;

use condext::dynamics::Trajectory;

/// Header `t,<coordinates>,<invariants>`, one row per accepted sample with
/// `{:.16e}` values, then one `# event:` line per recorded event.
pub fn write_trajectory(
    w: &mut impl Write,
    coords: &[String],
    traj: &Trajectory,
) -> io::Result<()> {
    let mut header = vec!["t".to_string()];
    header.extend(coords.iter().cloned());
    header.extend(traj.ledger_names.iter().cloned());
    writeln!(w, "{}", header.join(","))?;
    for (k, (t, z)) in traj.t.iter().zip(&traj.z).enumerate() {
        let mut row = format!("{t:.16e}");
        for v in z.iter().chain(traj.ledger.get(k).into_iter().flatten()) {
            row.push_str(&format!(",{v:.16e}"));
        }
        writeln!(w, "{row}")?;
    }
    for e in &traj.events {
        writeln!(w, "# event: {} t={:.16e}", e.name, e.t)?;
    }
    Ok(())
}

/// Gnuplot script over the given CSV files. Central-field files are drawn
/// as polar orbits `r(φ)`, others as `x2` against `x1` (or `x1` against `t`).
pub fn plot_script(files: &[&Path], n: usize, polar: bool) -> String {
    let mut s = String::from("set datafile separator ','\nset datafile commentschars '#'\nset key autotitle columnhead\n");
    let using = if polar {
        s.push_str("set polar\nset size square\nunset border\nset grid polar\n");
        "3:2"
    } else if n >= 2 {
        "2:3"
    } else {
        "1:2"
    };
    let plots: Vec<String> = files
        .iter()
        .map(|f| {
            format!(
                "'{}' using {using} with lines title '{}'",
                f.display(),
                f.display()
            )
        })
        .collect();
    s.push_str(&format!("plot {}\n", plots.join(", \\\n     ")));
    s
}
