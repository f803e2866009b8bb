//! Model description files.
//!
//! A model is a TOML document:
//!
//! ```toml
//! name = "central-field"
//! regime = "one-step"
//!
//! [params]
//! m = 1.0
//! alpha = 1.0
//!
//! [system]
//! z = [["1", "0", "0"]]
//! v = ["0", "x3/(m*x1^2)", "0"]
//! l = "m*u1^2/2 + x3^2/(2*m*x1^2) + alpha/x1"
//!
//! [samples]
//! box = [[0.5, 3.0], [-3.14, 3.14], [0.5, 2.0]]
//! singular = ["x1"]
//! ```
//!
//! Expressions may use `x1..xn`, `u1..um` (Lagrangian only) and the
//! parameter names; invariants and events also see the momenta `p1..pk`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{Direction, Event, IntegrateOptions, Invariant};
use crate::expr::{Compiled, Expr, ExprError};
use crate::geometry::{coordinate_names, halton_samples, ClosureOptions, ClosureResult};
use crate::hamiltonize::{ControlSystem, HamError, HamiltonianSystem};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{0}")]
    Parse(String),
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
    #[error("{field}: {source}")]
    Expr { field: String, source: ExprError },
    #[error(
        "sample {index} at {point:?} is on or across the singular locus `{expr}` (value {value})"
    )]
    Singular {
        index: usize,
        point: Vec<f64>,
        expr: String,
        value: f64,
    },
    #[error(transparent)]
    Ham(#[from] HamError),
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        message: message.into(),
    }
}

/// Declared closure shape of a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// The generators close among themselves and with the drift (`m̄ = m`).
    Integrable,
    /// The closure spans the tangent space (`m̄ = n`).
    PureGauge,
    /// The closure adds exactly `[Z_α, V]` for each generator.
    OneStep,
}

impl Regime {
    pub fn holds(self, cl: &ClosureResult) -> Result<bool, crate::geometry::GeomError> {
        Ok(match self {
            Regime::Integrable => cl.m_bar() == cl.m,
            Regime::PureGauge => cl.pure_gauge,
            Regime::OneStep => cl.is_one_step()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    /// `z[α][i]`: component `i` of generator `α`.
    pub z: Vec<Vec<String>>,
    pub v: Vec<String>,
    pub l: String,
    /// Seed box for the Legendre inversion, one `[lo, hi]` per control.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_box: Option<Vec<[f64; 2]>>,
    /// Keep the momentum part of the phase drift (turning it off breaks the
    /// Leibniz identity on purpose).
    #[serde(default = "yes")]
    pub momentum_drift: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplesSection {
    /// One `[lo, hi]` per state coordinate.
    #[serde(default, rename = "box")]
    pub bounds: Vec<[f64; 2]>,
    #[serde(default = "default_count")]
    pub count: usize,
    /// Explicit points; used instead of the box when present.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub points: Vec<Vec<f64>>,
    /// Expressions in `x` that must not vanish on the sample set.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub singular: Vec<String>,
}

fn default_count() -> usize {
    32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "d_rank")]
    pub rank_tol: f64,
    #[serde(default = "d_closure")]
    pub closure_tol: f64,
    #[serde(default = "d_rtol")]
    pub rtol: f64,
    #[serde(default = "d_atol")]
    pub atol: f64,
    #[serde(default = "d_hessian")]
    pub hessian_tol: f64,
}

fn d_rank() -> f64 {
    1e-7
}
fn d_closure() -> f64 {
    1e-6
}
fn d_rtol() -> f64 {
    1e-10
}
fn d_atol() -> f64 {
    1e-12
}
fn d_hessian() -> f64 {
    1e-10
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rank_tol: d_rank(),
            closure_tol: d_closure(),
            rtol: d_rtol(),
            atol: d_atol(),
            hessian_tol: d_hessian(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventDirection {
    Rising,
    Falling,
    Either,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventDecl {
    pub name: String,
    /// Phase function whose zero is the event.
    pub expr: String,
    #[serde(default = "falling")]
    pub direction: EventDirection,
    #[serde(default = "yes")]
    pub terminal: bool,
}

fn falling() -> EventDirection {
    EventDirection::Falling
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvariantDecl {
    pub name: String,
    pub expr: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrateSection {
    /// Initial phase point `(x, p)`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub state: Vec<f64>,
    #[serde(default)]
    pub t_start: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    /// Upper bound on the step size.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regime: Option<Regime>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    pub system: SystemSection,
    #[serde(default)]
    pub samples: SamplesSection,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub invariants: Vec<InvariantDecl>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub events: Vec<EventDecl>,
    #[serde(default)]
    pub integrate: IntegrateSection,
}

impl ModelConfig {
    /// Parse and validate a TOML document. Parse errors carry line and
    /// column.
    pub fn from_toml(src: &str) -> Result<Self, ConfigError> {
        let cfg: ModelConfig =
            toml::from_str(src).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("model configs serialize")
    }

    pub fn n(&self) -> usize {
        self.system.v.len()
    }

    pub fn m(&self) -> usize {
        self.system.z.len()
    }

    /// Structural checks and compilation of every expression.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let (n, m) = (self.n(), self.m());
        if n == 0 {
            return Err(invalid(
                "system.v",
                "the drift needs at least one component",
            ));
        }
        if m == 0 || m > n {
            return Err(invalid(
                "system.z",
                format!("{m} generators for {n} states"),
            ));
        }
        for (a, z) in self.system.z.iter().enumerate() {
            if z.len() != n {
                return Err(invalid(
                    &format!("system.z[{a}]"),
                    format!("{} components, expected {n}", z.len()),
                ));
            }
        }
        if let Some(b) = &self.system.u_box {
            if b.len() != m {
                return Err(invalid(
                    "system.u_box",
                    format!("{} intervals for {m} controls", b.len()),
                ));
            }
        }
        if self.samples.points.is_empty() {
            if self.samples.bounds.len() != n {
                return Err(invalid(
                    "samples.box",
                    format!("{} intervals for {n} states", self.samples.bounds.len()),
                ));
            }
            if let Some(k) = self.samples.bounds.iter().position(|[lo, hi]| !(lo < hi)) {
                return Err(invalid("samples.box", format!("interval {k} is empty")));
            }
            if self.samples.count == 0 {
                return Err(invalid("samples.count", "needs at least one sample"));
            }
        } else if let Some(p) = self.samples.points.iter().find(|p| p.len() != n) {
            return Err(invalid(
                "samples.points",
                format!("point {p:?} does not have {n} coordinates"),
            ));
        }
        let x = coordinate_names("x", n);
        let xs: Vec<&str> = x.iter().map(String::as_str).collect();
        for (a, z) in self.system.z.iter().enumerate() {
            for (i, c) in z.iter().enumerate() {
                self.compile(&format!("system.z[{a}][{i}]"), c, &xs)?;
            }
        }
        for (i, c) in self.system.v.iter().enumerate() {
            self.compile(&format!("system.v[{i}]"), c, &xs)?;
        }
        let mut xu = x.clone();
        xu.extend(coordinate_names("u", m));
        let xus: Vec<&str> = xu.iter().map(String::as_str).collect();
        self.compile("system.l", &self.system.l, &xus)?;
        for s in &self.samples.singular {
            self.compile("samples.singular", s, &xs)?;
        }
        for t in &self.tolerances_list() {
            if !(t.1 > 0.0) {
                return Err(invalid(&format!("tolerances.{}", t.0), "must be positive"));
            }
        }
        Ok(())
    }

    fn tolerances_list(&self) -> [(&'static str, f64); 5] {
        let t = &self.tolerances;
        [
            ("rank_tol", t.rank_tol),
            ("closure_tol", t.closure_tol),
            ("rtol", t.rtol),
            ("atol", t.atol),
            ("hessian_tol", t.hessian_tol),
        ]
    }

    fn compile(&self, field: &str, src: &str, vars: &[&str]) -> Result<Compiled, ConfigError> {
        Compiled::new(src, vars, &self.params).map_err(|source| ConfigError::Expr {
            field: field.into(),
            source,
        })
    }

    pub fn control_system(&self) -> Result<ControlSystem, ConfigError> {
        self.validate()?;
        let mut sys = ControlSystem::from_exprs(
            &self.name,
            &self.system.z,
            &self.system.v,
            &self.system.l,
            self.params.clone(),
        )
        .map_err(|source| ConfigError::Expr {
            field: "system".into(),
            source,
        })?;
        sys.u_box = self
            .system
            .u_box
            .as_ref()
            .map(|b| b.iter().map(|[lo, hi]| (*lo, *hi)).collect());
        sys.hessian_tol = self.tolerances.hessian_tol;
        Ok(sys)
    }

    /// Closure sample points, checked against the singular loci: every
    /// declared expression must be nonzero with one sign on the whole set.
    pub fn samples(&self) -> Result<Vec<Vec<f64>>, ConfigError> {
        let pts = if self.samples.points.is_empty() {
            let b: Vec<(f64, f64)> = self
                .samples
                .bounds
                .iter()
                .map(|[lo, hi]| (*lo, *hi))
                .collect();
            halton_samples(&b, self.samples.count)
        } else {
            self.samples.points.clone()
        };
        let x = coordinate_names("x", self.n());
        let xs: Vec<&str> = x.iter().map(String::as_str).collect();
        for s in &self.samples.singular {
            let f = self.compile("samples.singular", s, &xs)?;
            let mut sign = 0.0;
            for (index, p) in pts.iter().enumerate() {
                let value = f.eval(p).map_err(|source| ConfigError::Expr {
                    field: "samples.singular".into(),
                    source,
                })?;
                let bad = value.abs() < 1e-9 || (sign != 0.0 && value.signum() != sign);
                if bad {
                    return Err(ConfigError::Singular {
                        index,
                        point: p.clone(),
                        expr: s.clone(),
                        value,
                    });
                }
                sign = value.signum();
            }
        }
        Ok(pts)
    }

    pub fn closure_options(&self) -> ClosureOptions {
        ClosureOptions {
            rank_tol: self.tolerances.rank_tol,
            closure_tol: self.tolerances.closure_tol,
            ..ClosureOptions::default()
        }
    }

    pub fn hamiltonian_system(&self) -> Result<HamiltonianSystem, ConfigError> {
        let sys = self.control_system()?;
        let cl = sys.close(&self.samples()?, self.closure_options())?;
        let mut hs = HamiltonianSystem::build(&sys, cl)?;
        hs.momentum_drift = self.system.momentum_drift;
        Ok(hs)
    }

    /// Phase-space variable names `x1..xn, p1..pk` of `hs`.
    fn phase_vars(hs: &HamiltonianSystem) -> Vec<String> {
        let mut v = coordinate_names("x", hs.n());
        v.extend(coordinate_names("p", hs.momenta()));
        v
    }

    fn phase_fn(
        &self,
        field: &str,
        src: &str,
        hs: &HamiltonianSystem,
    ) -> Result<Compiled, ConfigError> {
        let vars = Self::phase_vars(hs);
        let vs: Vec<&str> = vars.iter().map(String::as_str).collect();
        self.compile(field, src, &vs)
    }

    pub fn ledger(&self, hs: &HamiltonianSystem) -> Result<Vec<Invariant>, ConfigError> {
        self.invariants
            .iter()
            .map(|spec| {
                let f = self.phase_fn(&format!("invariants.{}", spec.name), &spec.expr, hs)?;
                Ok(Invariant::new(spec.name.clone(), move |z| {
                    f.eval(z).map_err(|e| e.to_string())
                }))
            })
            .collect()
    }

    pub fn events(&self, hs: &HamiltonianSystem) -> Result<Vec<Event>, ConfigError> {
        self.events
            .iter()
            .map(|spec| {
                let f = self.phase_fn(&format!("events.{}", spec.name), &spec.expr, hs)?;
                let direction = match spec.direction {
                    EventDirection::Rising => Direction::Rising,
                    EventDirection::Falling => Direction::Falling,
                    EventDirection::Either => Direction::Either,
                };
                // a failed evaluation reads as "not crossed"
                Ok(Event::new(
                    spec.name.clone(),
                    direction,
                    spec.terminal,
                    move |_, z| f.eval(z).unwrap_or(f64::NAN),
                ))
            })
            .collect()
    }

    pub fn integrate_options(
        &self,
        hs: &HamiltonianSystem,
    ) -> Result<IntegrateOptions, ConfigError> {
        Ok(IntegrateOptions {
            rtol: self.tolerances.rtol,
            atol: self.tolerances.atol,
            events: self.events(hs)?,
            invariants: self.ledger(hs)?,
            h_max: self.integrate.h_max,
            ..IntegrateOptions::default()
        })
    }

    /// Rebind a parameter; the name must already exist.
    pub fn set_param(&mut self, name: &str, value: f64) -> Result<(), ConfigError> {
        match self.params.get_mut(name) {
            Some(v) => {
                *v = value;
                Ok(())
            }
            None => Err(invalid("params", format!("unknown parameter `{name}`"))),
        }
    }
}

/// Expression text with `r` replaced by `x1`.
pub(crate) fn in_x1(src: &str) -> Result<String, ExprError> {
    Ok(Expr::parse(src)?
        .substitute("r", &Expr::Var("x1".into()))
        .to_string())
}
