use std::collections::BTreeMap;
use std::sync::Arc;

use super::HamError;
use crate::autodiff::{Dual, D2};
use crate::expr::ExprError;
use crate::geometry::{
    close_distribution, coordinate_names, ClosureOptions, ClosureResult, ExprMap, MapFn,
    VectorField,
};

/// Constraint equations `ẋ = Z_α(x) u^α + V(x)` together with a Lagrangian
/// `L(x, u)`.
#[derive(Debug, Clone)]
pub struct ControlSystem {
    pub name: String,
    pub n: usize,
    pub m: usize,
    pub generators: Vec<VectorField>,
    pub drift: VectorField,
    /// Scalar map of the concatenated arguments `(x1..xn, u1..um)`.
    pub lagrangian: Arc<dyn MapFn>,
    pub params: BTreeMap<String, f64>,
    /// Box searched for a Newton seed when the plain seed `u = 0` stalls.
    pub u_box: Option<Vec<(f64, f64)>>,
    /// Smallest admissible `|det ∂²L/∂u∂u|`.
    pub hessian_tol: f64,
}

/// `L`, `∂L/∂x`, `∂L/∂u` and `∂²L/∂u∂u` at one point.
#[derive(Debug, Clone)]
pub struct LagrangianJet {
    pub value: f64,
    pub l_x: Vec<f64>,
    pub l_u: Vec<f64>,
    pub l_uu: Vec<Vec<f64>>,
}

impl ControlSystem {
    /// Build from expression strings: `z[α]` lists the n components of
    /// `Z_α`, `v` the drift, `l` the Lagrangian in `x1..xn, u1..um`.
    pub fn from_exprs(
        name: impl Into<String>,
        z: &[Vec<String>],
        v: &[String],
        l: &str,
        params: BTreeMap<String, f64>,
    ) -> Result<Self, ExprError> {
        let n = v.len();
        let m = z.len();
        let generators = z
            .iter()
            .enumerate()
            .map(|(a, comps)| VectorField::from_exprs(format!("Z{}", a + 1), comps, &params))
            .collect::<Result<Vec<_>, _>>()?;
        let drift = VectorField::from_exprs("V", v, &params)?;
        let mut vars = coordinate_names("x", n);
        vars.extend(coordinate_names("u", m));
        let vars: Vec<&str> = vars.iter().map(String::as_str).collect();
        let lagrangian = ExprMap::new("L", &[l], &vars, &params)?;
        Ok(Self {
            name: name.into(),
            n,
            m,
            generators,
            drift,
            lagrangian: Arc::new(lagrangian),
            params,
            u_box: None,
            hessian_tol: 1e-10,
        })
    }

    pub fn validate(&self) -> Result<(), HamError> {
        let bad = |what: String| Err(HamError::Invalid(what));
        if self.generators.len() != self.m {
            return bad(format!(
                "{} generators for m = {}",
                self.generators.len(),
                self.m
            ));
        }
        if let Some(g) = self.generators.iter().find(|g| g.dim() != self.n) {
            return bad(format!(
                "generator {} has dimension {}, expected {}",
                g.name,
                g.dim(),
                self.n
            ));
        }
        if self.drift.dim() != self.n {
            return bad(format!(
                "drift has dimension {}, expected {}",
                self.drift.dim(),
                self.n
            ));
        }
        if self.lagrangian.in_dim() != self.n + self.m || self.lagrangian.out_dim() != 1 {
            return bad("Lagrangian must be a scalar function of (x, u)".into());
        }
        Ok(())
    }

    /// Close the characteristic distribution together with the drift.
    pub fn close(
        &self,
        samples: &[Vec<f64>],
        options: ClosureOptions,
    ) -> Result<ClosureResult, HamError> {
        self.validate()?;
        Ok(close_distribution(
            &self.generators,
            &self.drift,
            samples,
            options,
        )?)
    }

    fn args(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        a.extend_from_slice(u);
        a
    }

    pub fn lagrangian_value(&self, x: &[f64], u: &[f64]) -> Result<f64, HamError> {
        Ok(self.lagrangian.eval_f64(&self.args(x, u))?[0])
    }

    /// Value, gradient and control Hessian from one second-order evaluation.
    pub fn jet(&self, x: &[f64], u: &[f64]) -> Result<LagrangianJet, HamError> {
        let args = self.args(x, u);
        let seeded: Vec<D2> = Dual::variables(&Dual::variables(&args));
        let y = self.lagrangian.eval_d2(&seeded)?.remove(0);
        let n = self.n;
        let grad: Vec<f64> = (0..args.len()).map(|i| y.value.partial(i)).collect();
        let l_uu = (0..self.m)
            .map(|a| {
                (0..self.m)
                    .map(|b| y.partial(n + a).partial(n + b))
                    .collect()
            })
            .collect();
        Ok(LagrangianJet {
            value: y.value.value,
            l_x: grad[..n].to_vec(),
            l_u: grad[n..].to_vec(),
            l_uu,
        })
    }

    /// `∂L/∂u` and `∂²L/∂u∂u` with `x` held constant.
    pub fn control_jet(&self, x: &[f64], u: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>), HamError> {
        let mut args: Vec<D2> = x
            .iter()
            .map(|&v| Dual::constant_of(Dual::constant_of(v)))
            .collect();
        args.extend(Dual::variables(&Dual::variables(u)));
        let y = self.lagrangian.eval_d2(&args)?.remove(0);
        let m = self.m;
        let l_u = (0..m).map(|a| y.value.partial(a)).collect();
        let l_uu = (0..m)
            .map(|a| (0..m).map(|b| y.partial(a).partial(b)).collect())
            .collect();
        Ok((l_u, l_uu))
    }

    /// `∂L/∂x` and `∂L/∂u` from one first-order evaluation.
    pub fn gradient(&self, x: &[f64], u: &[f64]) -> Result<(Vec<f64>, Vec<f64>), HamError> {
        let args = self.args(x, u);
        let y = self.lagrangian.eval_d1(&Dual::variables(&args))?.remove(0);
        let g: Vec<f64> = (0..args.len()).map(|i| y.partial(i)).collect();
        Ok((g[..self.n].to_vec(), g[self.n..].to_vec()))
    }

    /// `Z_α(x) u^α + V(x)`.
    pub fn velocity(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>, HamError> {
        let mut out = self.drift.eval(x)?;
        for (g, ua) in self.generators.iter().zip(u) {
            for (o, z) in out.iter_mut().zip(g.eval(x)?) {
                *o += z * ua;
            }
        }
        Ok(out)
    }
}
