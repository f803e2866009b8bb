//! Time evolution of phase-space systems and residual checks along the
//! resulting trajectories.
//!
//! [`integrate`] is a Dormand–Prince 5(4) integrator with dense output,
//! event location and a ledger of scalar functions evaluated at every
//! accepted step. The residual functions in [`residual`] reconstruct time
//! derivatives from the dense output by central differences.

mod dopri;
pub mod residual;

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::hamiltonize::{HamError, HamiltonianSystem};

pub use dopri::{integrate, DenseStep};
pub use residual::{
    conditional_residual, euler_lagrange_residual, hamiltonian_residual, ControlSource,
    ResidualOptions, ResidualSeries,
};

#[derive(Debug, Error)]
pub enum DynError {
    #[error("state of length {got}, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("non-finite value at t = {t}")]
    NonFinite { t: f64, state: Vec<f64> },
    #[error("right-hand side failed at t = {t}: {message}")]
    Rhs { t: f64, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error("time {t} outside the trajectory [{t0}, {t1}]")]
    OutOfRange { t: f64, t0: f64, t1: f64 },
    #[error("too few samples: {0}")]
    InsufficientSamples(String),
    #[error("invariant {name} failed at t = {t}: {message}")]
    Invariant {
        name: String,
        t: f64,
        message: String,
    },
    #[error(transparent)]
    Ham(#[from] HamError),
}

/// First-order system `ẏ = f(t, y)`.
pub trait OdeSystem: Sync {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), DynError>;
}

impl OdeSystem for HamiltonianSystem {
    fn dim(&self) -> usize {
        HamiltonianSystem::dim(self)
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), DynError> {
        let v = HamiltonianSystem::rhs(self, y).map_err(|e| DynError::Rhs {
            t,
            message: e.to_string(),
        })?;
        dy.copy_from_slice(&v);
        Ok(())
    }
}

pub type ScalarFn = Arc<dyn Fn(&[f64]) -> Result<f64, String> + Send + Sync>;
pub type EventFn = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;

/// A named scalar function recorded along the trajectory.
#[derive(Clone)]
pub struct Invariant {
    pub name: String,
    pub f: ScalarFn,
}

impl Invariant {
    pub fn new(
        name: impl Into<String>,
        f: impl Fn(&[f64]) -> Result<f64, String> + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            f: Arc::new(f),
        }
    }
}

impl fmt::Debug for Invariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Invariant({})", self.name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Rising,
    Falling,
    Either,
}

/// Zero crossing of `g(t, y)`.
#[derive(Clone)]
pub struct Event {
    pub name: String,
    pub g: EventFn,
    pub direction: Direction,
    pub terminal: bool,
}

impl Event {
    pub fn new(
        name: impl Into<String>,
        direction: Direction,
        terminal: bool,
        g: impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            g: Arc::new(g),
            direction,
            terminal,
        }
    }

    /// Terminal event when component `index` falls below `level`.
    pub fn below(name: impl Into<String>, index: usize, level: f64) -> Self {
        Self::new(name, Direction::Falling, true, move |_, y| y[index] - level)
    }
}

impl fmt::Debug for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Event({}, {:?}, terminal = {})",
            self.name, self.direction, self.terminal
        )
    }
}

#[derive(Debug, Clone)]
pub struct EventRecord {
    pub name: String,
    pub t: f64,
    pub state: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct IntegrateOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h0: Option<f64>,
    pub h_max: Option<f64>,
    pub h_min: f64,
    pub max_steps: usize,
    /// Width of the bracket a located event time is refined to.
    pub event_tol: f64,
    pub events: Vec<Event>,
    pub invariants: Vec<Invariant>,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            h0: None,
            h_max: None,
            h_min: 1e-14,
            max_steps: 2_000_000,
            event_tol: 1e-12,
            events: Vec::new(),
            invariants: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Termination {
    Running,
    End,
    Event(String),
    Failed(String),
}

/// Accepted samples, dense output and the invariant ledger of one run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub z: Vec<Vec<f64>>,
    /// Accepted step sizes; entry `k` led to sample `k` (0 for the start).
    pub h: Vec<f64>,
    /// Scaled local error estimates of the accepted steps.
    pub err: Vec<f64>,
    pub steps: Vec<DenseStep>,
    pub rejected: usize,
    pub termination: Termination,
    pub events: Vec<EventRecord>,
    pub ledger_names: Vec<String>,
    /// `ledger[k][j]` is invariant `j` at sample `k`.
    pub ledger: Vec<Vec<f64>>,
    invariants: Vec<Invariant>,
    dim: usize,
}

impl Trajectory {
    fn new(dim: usize, invariants: &[Invariant]) -> Self {
        Self {
            t: Vec::new(),
            z: Vec::new(),
            h: Vec::new(),
            err: Vec::new(),
            steps: Vec::new(),
            rejected: 0,
            termination: Termination::Running,
            events: Vec::new(),
            ledger_names: invariants.iter().map(|i| i.name.clone()).collect(),
            ledger: Vec::new(),
            invariants: invariants.to_vec(),
            dim,
        }
    }

    fn push(&mut self, t: f64, z: Vec<f64>, h: f64, err: f64) -> Result<(), DynError> {
        let row = self
            .invariants
            .iter()
            .map(|inv| {
                (inv.f)(&z).map_err(|message| DynError::Invariant {
                    name: inv.name.clone(),
                    t,
                    message,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        self.ledger.push(row);
        self.t.push(t);
        self.z.push(z);
        self.h.push(h);
        self.err.push(err);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn t_start(&self) -> f64 {
        self.t[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.t.last().expect("trajectory has a start sample")
    }

    pub fn last(&self) -> &[f64] {
        self.z.last().expect("trajectory has a start sample")
    }

    pub fn succeeded(&self) -> bool {
        matches!(self.termination, Termination::End | Termination::Event(_))
    }

    /// State at `t` from the dense output.
    pub fn eval(&self, t: f64) -> Result<Vec<f64>, DynError> {
        let (t0, t1) = (self.t_start(), self.t_end());
        if !(t0..=t1).contains(&t) {
            return Err(DynError::OutOfRange { t, t0, t1 });
        }
        if self.steps.is_empty() {
            return Ok(self.z[0].clone());
        }
        let k = self
            .steps
            .partition_point(|s| s.t1() < t)
            .min(self.steps.len() - 1);
        Ok(self.steps[k].eval(t))
    }

    /// Copy with component `index` multiplied by `factor` in the samples and
    /// the dense output; the ledger is re-evaluated.
    pub fn with_scaled_component(&self, index: usize, factor: f64) -> Result<Self, DynError> {
        let mut out = self.clone();
        for z in &mut out.z {
            z[index] *= factor;
        }
        for step in &mut out.steps {
            step.scale_component(index, factor);
        }
        out.ledger = out
            .z
            .iter()
            .zip(&out.t)
            .map(|(z, &t)| {
                out.invariants
                    .iter()
                    .map(|inv| {
                        (inv.f)(z).map_err(|message| DynError::Invariant {
                            name: inv.name.clone(),
                            t,
                            message,
                        })
                    })
                    .collect()
            })
            .collect::<Result<_, _>>()?;
        Ok(out)
    }

    /// Size of the accepted step covering `t`.
    pub fn step_at(&self, t: f64) -> f64 {
        if self.steps.is_empty() {
            return 0.0;
        }
        let k = self
            .steps
            .partition_point(|s| s.t1() < t)
            .min(self.steps.len() - 1);
        self.steps[k].h
    }

    /// Column `j` of the ledger.
    pub fn ledger_column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.ledger_names.iter().position(|n| n == name)?;
        Some(self.ledger.iter().map(|row| row[j]).collect())
    }

    /// Largest `|Q(t) − Q(0)| / max(1, |Q(0)|)` of a ledger column.
    pub fn relative_drift(&self, name: &str) -> Option<f64> {
        let col = self.ledger_column(name)?;
        let q0 = col[0];
        Some(col.iter().map(|q| (q - q0).abs()).fold(0.0, f64::max) / q0.abs().max(1.0))
    }
}
