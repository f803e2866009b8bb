//! Built-in models, one per closure regime.
//!
//! | name                | n | m | m̄ | regime                |
//! |---------------------|---|---|----|-----------------------|
//! | `planar-free`       | 2 | 2 | 2  | pure gauge            |
//! | `rotation-drift`    | 3 | 1 | 1  | integrable            |
//! | `rotation-dilation` | 2 | 2 | 2  | pure gauge, curved    |
//! | `one-step-pair`     | 4 | 2 | 4  | one step (and pure gauge) |
//! | `central-field`     | 3 | 1 | 2  | one step              |
//!
//! Sample boxes stay away from the zeros of the generators: the rotation
//! toys exclude the axis, the central field excludes `r = 0`.

use std::collections::BTreeMap;

use crate::central_field::CentralFieldParams;
use crate::config::{
    in_x1, EventDecl, EventDirection, IntegrateSection, InvariantDecl, ModelConfig, Regime,
    SamplesSection, SystemSection, Tolerances,
};
use crate::expr::ExprError;

pub const NAMES: [&str; 5] = [
    "planar-free",
    "rotation-drift",
    "rotation-dilation",
    "one-step-pair",
    "central-field",
];

fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn params(kv: &[(&str, f64)]) -> BTreeMap<String, f64> {
    kv.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn invariant(name: &str, expr: &str) -> InvariantDecl {
    InvariantDecl {
        name: name.into(),
        expr: expr.into(),
    }
}

struct Blueprint<'a> {
    name: &'a str,
    regime: Regime,
    params: &'a [(&'a str, f64)],
    z: &'a [&'a [&'a str]],
    v: &'a [&'a str],
    l: &'a str,
    bounds: &'a [[f64; 2]],
    singular: &'a [&'a str],
    state: &'a [f64],
    t_end: f64,
    h_max: Option<f64>,
}

impl Blueprint<'_> {
    fn build(self) -> ModelConfig {
        ModelConfig {
            name: self.name.into(),
            regime: Some(self.regime),
            params: params(self.params),
            system: SystemSection {
                z: self.z.iter().map(|z| strings(z)).collect(),
                v: strings(self.v),
                l: self.l.into(),
                u_box: None,
                momentum_drift: true,
            },
            samples: SamplesSection {
                bounds: self.bounds.to_vec(),
                count: 32,
                points: Vec::new(),
                singular: strings(self.singular),
            },
            tolerances: Tolerances::default(),
            invariants: Vec::new(),
            events: Vec::new(),
            integrate: IntegrateSection {
                state: self.state.to_vec(),
                t_start: 0.0,
                t_end: Some(self.t_end),
                h_max: self.h_max,
            },
        }
    }
}

/// Free motion in the plane with `Z = 1`, `V = 0` and
/// `L = (u₁² + u₂²)/2 − k(x₁² + x₂²)/2`. Default `k = 0`.
pub fn planar_free(k: f64) -> ModelConfig {
    let mut cfg = Blueprint {
        name: "planar-free",
        regime: Regime::PureGauge,
        params: &[("k", k)],
        z: &[&["1", "0"], &["0", "1"]],
        v: &["0", "0"],
        l: "(u1^2 + u2^2)/2 - k*(x1^2 + x2^2)/2",
        bounds: &[[-2.0, 2.0], [-2.0, 2.0]],
        singular: &[],
        state: &[0.0, 0.0, 1.0, 0.5],
        t_end: 10.0,
        h_max: Some(0.1),
    }
    .build();
    cfg.invariants = vec![
        invariant("E", "(p1^2 + p2^2)/2 + k*(x1^2 + x2^2)/2"),
        invariant("Lz", "x1*p2 - x2*p1"),
    ];
    cfg
}

/// One rotation generator `Z = −x₂∂₁ + x₁∂₂` with drift
/// `V = ωZ + ν∂₃`, `ω = 1 + κ((x₁ − a)² + x₂²)`.
///
/// `[Z, V] = Z(ω) Z`, so the distribution closes at rank one with a
/// nonzero drift coefficient whenever `κa ≠ 0`. The box keeps away from the
/// axis `x₁ = x₂ = 0` where `Z` vanishes.
pub fn rotation_drift(kappa: f64, a: f64, nu: f64) -> ModelConfig {
    let mut cfg = Blueprint {
        name: "rotation-drift",
        regime: Regime::Integrable,
        params: &[("kappa", kappa), ("a", a), ("nu", nu)],
        z: &[&["-x2", "x1", "0"]],
        v: &[
            "-(1 + kappa*((x1 - a)^2 + x2^2))*x2",
            "(1 + kappa*((x1 - a)^2 + x2^2))*x1",
            "nu",
        ],
        l: "u1^2/2 - (x1^2 + x2^2)/2",
        bounds: &[[0.5, 2.0], [0.5, 2.0], [-1.0, 1.0]],
        singular: &["x1^2 + x2^2"],
        state: &[1.0, 0.5, 0.0, 0.3],
        t_end: 10.0,
        h_max: None,
    }
    .build();
    cfg.invariants = vec![invariant("rho2", "x1^2 + x2^2")];
    cfg
}

/// Rotation and dilation generators `Z₁ = −x₂∂₁ + x₁∂₂`, `Z₂ = x₁∂₁ + x₂∂₂`
/// with `V = c∂₁` and `L = (u₁² + u₂²)/2 − ρ²/4 − 1/(4ρ²)`, `ρ² = x₁² + x₂²`.
/// The frame is invertible off the origin; its brackets vanish but
/// `[Zα, V] ≠ 0`, so the momenta are not canonical. In `(ln ρ, θ)` the
/// kinetic term is flat and the potential `cosh(2 ln ρ)/2` keeps orbits near
/// `ρ = 1`.
pub fn rotation_dilation(c: f64) -> ModelConfig {
    Blueprint {
        name: "rotation-dilation",
        regime: Regime::PureGauge,
        params: &[("c", c)],
        z: &[&["-x2", "x1"], &["x1", "x2"]],
        v: &["c", "0"],
        l: "(u1^2 + u2^2)/2 - (x1^2 + x2^2)/4 - 1/(4*(x1^2 + x2^2))",
        bounds: &[[0.5, 2.0], [-1.5, 1.5]],
        singular: &["x1^2 + x2^2"],
        state: &[1.0, 0.2, 0.1, -0.1],
        t_end: 5.0,
        h_max: None,
    }
    .build()
}

/// `Z₁ = ∂₁`, `Z₂ = e^{x₁²/2}∂₂`, `V = x₁∂₃ + (x₂ + x₃)∂₄` and
/// `L = (u₁² + u₂²)/2 − (x₃² + x₄²)/2`. One bracket with the drift adds
/// `∂₃` and `e^{x₁²/2}∂₄`, which complete the frame.
pub fn one_step_pair() -> ModelConfig {
    Blueprint {
        name: "one-step-pair",
        regime: Regime::OneStep,
        params: &[],
        z: &[&["1", "0", "0", "0"], &["0", "exp(x1^2/2)", "0", "0"]],
        v: &["0", "0", "x1", "x2 + x3"],
        l: "(u1^2 + u2^2)/2 - (x3^2 + x4^2)/2",
        bounds: &[[-1.0, 1.0], [-1.0, 1.0], [-1.0, 1.0], [-1.0, 1.0]],
        singular: &[],
        state: &[0.2, -0.1, 0.3, 0.1, 0.5, 0.2, -0.3, 0.1],
        t_end: 3.0,
        h_max: None,
    }
    .build()
}

/// The central field `ẋ = u∂_r + (M/(m r²))∂_φ` in `(r, φ, M)` with
/// `L = m u²/2 + M²/(2m r²) − U(r)`, the ledger `M, E, K` and a terminal
/// event `r < r_min`.
pub fn central_field(p: &CentralFieldParams, r_min: f64) -> Result<ModelConfig, ExprError> {
    let u = in_x1(&p.potential)?;
    let l = format!("m*u1^2/2 + x3^2/(2*m*x1^2) - ({u})");
    let pi = std::f64::consts::PI;
    let mut cfg = Blueprint {
        name: "central-field",
        regime: Regime::OneStep,
        params: &[("m", p.m), ("alpha", p.alpha), ("r_min", r_min)],
        z: &[&["1", "0", "0"]],
        v: &["0", "x3/(m*x1^2)", "0"],
        l: &l,
        bounds: &[[0.5, 3.0], [-pi, pi], [0.5, 2.0]],
        singular: &["x1"],
        state: &[1.0, 0.0, 1.0, 0.0, -2.0],
        t_end: 100.0,
        h_max: None,
    }
    .build();
    cfg.system.u_box = Some(vec![[-10.0, 10.0]]);
    cfg.invariants = vec![
        invariant("M", "x3"),
        invariant(
            "E",
            &format!("p1^2/(2*m) - x3^2/(2*m*x1^2) - x1/2*p2 + ({u})"),
        ),
        invariant("K", "x3^2/(4*m) + x1^3/8*p2"),
    ];
    cfg.events = vec![EventDecl {
        name: "r_min".into(),
        expr: "x1 - r_min".into(),
        direction: EventDirection::Falling,
        terminal: true,
    }];
    Ok(cfg)
}

/// Built-in model by name with default parameters.
pub fn builtin(name: &str) -> Option<ModelConfig> {
    Some(match name {
        "planar-free" => planar_free(0.0),
        "rotation-drift" => rotation_drift(0.3, 0.5, 0.2),
        "rotation-dilation" => rotation_dilation(0.3),
        "one-step-pair" => one_step_pair(),
        "central-field" => {
            central_field(&CentralFieldParams::default(), 1e-3).expect("default potential parses")
        }
        _ => return None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_builtin_validates_and_round_trips() {
        for name in NAMES {
            let cfg = builtin(name).unwrap();
            cfg.validate().unwrap();
            assert_eq!(
                ModelConfig::from_toml(&cfg.to_toml()).unwrap(),
                cfg,
                "{name}"
            );
        }
        assert!(builtin("nope").is_none());
    }

    #[test]
    fn builtins_land_in_their_regime() {
        for name in NAMES {
            let cfg = builtin(name).unwrap();
            let hs = cfg.hamiltonian_system().unwrap();
            assert!(cfg.regime.unwrap().holds(&hs.closure).unwrap(), "{name}");
        }
    }
}
