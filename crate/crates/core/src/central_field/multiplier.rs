use super::{CentralError, CentralFieldParams};
use crate::autodiff::Dual;
use crate::dynamics::{DynError, OdeSystem};
use crate::expr::Compiled;

fn slope(u: &Compiled, r: f64, t: f64) -> Result<f64, DynError> {
    u.eval(&[Dual::variable(r, 0, 1)])
        .map(|v| v.partial(0))
        .map_err(|e| DynError::Rhs {
            t,
            message: e.to_string(),
        })
}

/// Euler–Lagrange equations of `m(ṙ² + r²φ̇²)/2 − U(r) + λ(M − m r²φ̇)` with
/// `M` held fixed, in the state `(r, ṙ, φ, φ̇, λ, λ̇)`:
///
/// ```text
/// r̈ = rφ̇² − U′/m − 2rλ̇φ̇,   φ̈ = −2ṙφ̇/r,   λ̈ = −2ṙλ̇/r
/// ```
#[derive(Debug, Clone)]
pub struct MultiplierSystem {
    pub params: CentralFieldParams,
    potential: Compiled,
}

impl MultiplierSystem {
    pub fn new(params: &CentralFieldParams) -> Result<Self, CentralError> {
        params.check()?;
        Ok(Self {
            params: params.clone(),
            potential: params.potential_fn()?,
        })
    }

    /// State with `λ = 0` and `λ̇ = c/(m r²)`.
    pub fn state(&self, r: f64, rdot: f64, phi: f64, phidot: f64, c: f64) -> Vec<f64> {
        vec![r, rdot, phi, phidot, 0.0, c / (self.params.m * r * r)]
    }

    /// `E_λ = mṙ²/2 + m r²φ̇²/2 − m r²φ̇λ̇ + U(r)`.
    pub fn energy(&self, y: &[f64]) -> Result<f64, CentralError> {
        let (r, rdot, phidot, ldot) = (y[0], y[1], y[3], y[5]);
        if r <= 0.0 {
            return Err(CentralError::Radius(r));
        }
        let m = self.params.m;
        let u = self.potential.eval(&[r])?;
        Ok(
            m * rdot * rdot / 2.0 + m * r * r * phidot * phidot / 2.0 - m * r * r * phidot * ldot
                + u,
        )
    }

    /// Conserved `c = m r² λ̇`.
    pub fn c(&self, y: &[f64]) -> f64 {
        self.params.m * y[0] * y[0] * y[5]
    }

    /// `M = m r² φ̇`.
    pub fn angular_momentum(&self, y: &[f64]) -> f64 {
        self.params.m * y[0] * y[0] * y[3]
    }

    /// `K = (r³/8)(−m r̈ − U′ + M²/(m r³))` of the `(r, φ)` motion, with `r̈`
    /// from the equations of motion.
    pub fn measured_k(&self, y: &[f64]) -> Result<f64, CentralError> {
        let mut dy = [0.0; 6];
        self.rhs(0.0, y, &mut dy)?;
        let (r, m) = (y[0], self.params.m);
        let big_m = self.angular_momentum(y);
        let du = slope(&self.potential, r, 0.0)?;
        Ok(r.powi(3) / 8.0 * (-m * dy[1] - du + big_m * big_m / (m * r.powi(3))))
    }

    /// Phase point `(r, φ, M, p, p₁)` of the same motion, with `K = cM/(4m)`.
    pub fn partially_lagrangian_state(&self, y: &[f64]) -> Vec<f64> {
        let big_m = self.angular_momentum(y);
        let k = self.c(y) * big_m / (4.0 * self.params.m);
        self.params.state(y[0], y[1], y[2], big_m, k)
    }
}

impl OdeSystem for MultiplierSystem {
    fn dim(&self) -> usize {
        6
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), DynError> {
        let (r, rdot, phidot, ldot) = (y[0], y[1], y[3], y[5]);
        if r <= 0.0 {
            return Err(DynError::Rhs {
                t,
                message: format!("radius {r} is not positive"),
            });
        }
        let du = slope(&self.potential, r, t)?;
        dy[0] = rdot;
        dy[1] = r * phidot * phidot - du / self.params.m - 2.0 * r * ldot * phidot;
        dy[2] = phidot;
        dy[3] = -2.0 * rdot * phidot / r;
        dy[4] = ldot;
        dy[5] = -2.0 * rdot * ldot / r;
        Ok(())
    }
}

/// Newtonian motion `(r, ṙ, φ, φ̇)` in the potential.
#[derive(Debug, Clone)]
pub struct KeplerSystem {
    m: f64,
    potential: Compiled,
}

pub fn kepler_system(params: &CentralFieldParams) -> Result<KeplerSystem, CentralError> {
    params.check()?;
    Ok(KeplerSystem {
        m: params.m,
        potential: params.potential_fn()?,
    })
}

impl OdeSystem for KeplerSystem {
    fn dim(&self) -> usize {
        4
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), DynError> {
        let (r, rdot, phidot) = (y[0], y[1], y[3]);
        if r <= 0.0 {
            return Err(DynError::Rhs {
                t,
                message: format!("radius {r} is not positive"),
            });
        }
        dy[0] = rdot;
        dy[1] = r * phidot * phidot - slope(&self.potential, r, t)? / self.m;
        dy[2] = phidot;
        dy[3] = -2.0 * rdot * phidot / r;
        Ok(())
    }
}
