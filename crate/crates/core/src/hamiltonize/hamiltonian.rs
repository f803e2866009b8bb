use super::{legendre, ControlSystem, HamError};
use crate::autodiff::{Dual, D1};
use crate::geometry::linalg::solve;
use crate::geometry::{
    coordinate_names, halton_samples, structure_functions_at, ClosureResult, Level,
};

/// Coordinates the system is written in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Form {
    /// `(x, p_ᾱ)` with the bracket built from the closed basis.
    Reduced,
    /// `(x, π_i)` with `p_ᾱ = Z^i_ᾱ π_i`; canonical bracket, drift absorbed.
    Canonical,
}

/// Phase-space system `ż = Π ∇H + 𝐕`.
#[derive(Debug, Clone)]
pub struct HamiltonianSystem {
    pub system: ControlSystem,
    pub closure: ClosureResult,
    pub form: Form,
    /// When false the momentum part of the drift is dropped. Only useful as
    /// a negative control for the identity checks.
    pub momentum_drift: bool,
    one_step: bool,
}

impl HamiltonianSystem {
    /// Assemble the bracket, Hamiltonian and drift from a closure.
    pub fn build(sys: &ControlSystem, closure: ClosureResult) -> Result<Self, HamError> {
        sys.validate()?;
        if closure.m != sys.m || closure.n() != sys.n {
            return Err(HamError::Invalid(format!(
                "closure of {} generators in dimension {} does not belong to {}",
                closure.m,
                closure.n(),
                sys.name
            )));
        }
        let residual = closure.max_residual()?;
        if residual > closure.options.closure_tol {
            return Err(HamError::NotClosed {
                residual,
                tol: closure.options.closure_tol,
            });
        }
        let one_step = closure.is_one_step()?;
        Ok(Self {
            system: sys.clone(),
            closure,
            form: Form::Reduced,
            momentum_drift: true,
            one_step,
        })
    }

    pub fn n(&self) -> usize {
        self.system.n
    }

    /// Number of momenta.
    pub fn momenta(&self) -> usize {
        match self.form {
            Form::Reduced => self.closure.m_bar(),
            Form::Canonical => self.n(),
        }
    }

    pub fn dim(&self) -> usize {
        self.n() + self.momenta()
    }

    /// True when the closure has the one-step shape `Z^(1)_α = [Z_α, V]`;
    /// the drift on `p^(0)_α` is then `−p^(1)_α`.
    pub fn is_one_step(&self) -> bool {
        self.one_step
    }

    pub fn coordinate_names(&self) -> Vec<String> {
        let mut names = coordinate_names("x", self.n());
        let prefix = if self.form == Form::Reduced {
            "p"
        } else {
            "pi"
        };
        names.extend(coordinate_names(prefix, self.momenta()));
        names
    }

    fn check_dim(&self, len: usize) -> Result<(), HamError> {
        if len != self.dim() {
            return Err(HamError::Invalid(format!(
                "phase point of length {len}, expected {}",
                self.dim()
            )));
        }
        Ok(())
    }

    /// Bivector `Π^{ab} = {z^a, z^b}` and drift `𝐕^a` at `z`.
    #[allow(clippy::type_complexity)]
    pub fn poisson_and_drift<T: Level>(&self, z: &[T]) -> Result<(Vec<Vec<T>>, Vec<T>), HamError> {
        self.check_dim(z.len())?;
        let d = self.dim();
        let n = self.n();
        let mut pi = vec![vec![T::zero(); d]; d];
        if self.form == Form::Canonical {
            for i in 0..n {
                pi[i][n + i] = T::one();
                pi[n + i][i] = -T::one();
            }
            return Ok((pi, vec![T::zero(); d]));
        }
        let (x, p) = z.split_at(n);
        let st = structure_functions_at(&self.closure, x)?;
        let k = self.closure.m_bar();
        for a in 0..k {
            for i in 0..n {
                pi[i][n + a] = st.basis[a][i].clone();
                pi[n + a][i] = -st.basis[a][i].clone();
            }
            for b in 0..k {
                let mut acc = T::zero();
                for g in 0..k {
                    acc = acc - st.u[g][a][b].clone() * p[g].clone();
                }
                pi[n + a][n + b] = acc;
            }
        }
        let mut drift = st.drift.clone();
        for a in 0..k {
            let mut acc = T::zero();
            if self.momentum_drift {
                for b in 0..k {
                    acc = acc - st.v[a][b].clone() * p[b].clone();
                }
            }
            drift.push(acc);
        }
        Ok((pi, drift))
    }

    pub fn poisson<T: Level>(&self, z: &[T]) -> Result<Vec<Vec<T>>, HamError> {
        Ok(self.poisson_and_drift(z)?.0)
    }

    pub fn drift<T: Level>(&self, z: &[T]) -> Result<Vec<T>, HamError> {
        Ok(self.poisson_and_drift(z)?.1)
    }

    /// Original momenta `p_α` (`α < m`) at `z`.
    pub fn original_momenta(&self, z: &[f64]) -> Result<Vec<f64>, HamError> {
        self.check_dim(z.len())?;
        let n = self.n();
        let (x, rest) = z.split_at(n);
        match self.form {
            Form::Reduced => Ok(rest[..self.system.m].to_vec()),
            Form::Canonical => self.closure.basis[..self.system.m]
                .iter()
                .map(|f| Ok(f.eval(x)?.iter().zip(rest).map(|(a, b)| a * b).sum()))
                .collect(),
        }
    }

    /// Control `ū(x, p)` from the inverse Legendre map.
    pub fn control(&self, z: &[f64]) -> Result<Vec<f64>, HamError> {
        let p = self.original_momenta(z)?;
        Ok(legendre(&self.system, &z[..self.n()], &p)?.0)
    }

    pub fn hamiltonian(&self, z: &[f64]) -> Result<f64, HamError> {
        let p = self.original_momenta(z)?;
        let x = &z[..self.n()];
        let h = legendre(&self.system, x, &p)?.1;
        match self.form {
            Form::Reduced => Ok(h),
            Form::Canonical => {
                let v = self.system.drift.eval(x)?;
                Ok(h + v
                    .iter()
                    .zip(&z[self.n()..])
                    .map(|(a, b)| a * b)
                    .sum::<f64>())
            }
        }
    }

    /// `∇H`. By the envelope property `∂H/∂x = −∂L/∂x(x, ū)` and
    /// `∂H/∂p_α = ū^α`; higher momenta do not enter `H`.
    pub fn gradient(&self, z: &[f64]) -> Result<Vec<f64>, HamError> {
        self.check_dim(z.len())?;
        let n = self.n();
        let m = self.system.m;
        let x = &z[..n];
        let u = self.control(z)?;
        let (l_x, _) = self.system.gradient(x, &u)?;
        let mut g = vec![0.0; self.dim()];
        for i in 0..n {
            g[i] = -l_x[i];
        }
        match self.form {
            Form::Reduced => g[n..n + m].copy_from_slice(&u),
            Form::Canonical => {
                let pi = &z[n..];
                for (a, ua) in u.iter().enumerate() {
                    let (za, jza) = self.closure.basis[a].jacobian(x)?;
                    for i in 0..n {
                        g[n + i] += ua * za[i];
                        for j in 0..n {
                            g[i] += ua * pi[j] * jza[j][i];
                        }
                    }
                }
                let (v, jv) = self.system.drift.jacobian(x)?;
                for i in 0..n {
                    g[n + i] += v[i];
                    for j in 0..n {
                        g[i] += pi[j] * jv[j][i];
                    }
                }
            }
        }
        Ok(g)
    }

    /// `ż = Π ∇H + 𝐕`.
    pub fn rhs(&self, z: &[f64]) -> Result<Vec<f64>, HamError> {
        let g = self.gradient(z)?;
        let (pi, drift) = self.poisson_and_drift(z)?;
        Ok(pi
            .iter()
            .zip(drift)
            .map(|(row, d)| row.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>() + d)
            .collect())
    }

    /// `{f, g} = ∂_a f Π^{ab} ∂_b g` from the two gradients.
    pub fn bracket(&self, df: &[f64], dg: &[f64], z: &[f64]) -> Result<f64, HamError> {
        let pi = self.poisson(z)?;
        let mut acc = 0.0;
        for (a, row) in pi.iter().enumerate() {
            for (b, pab) in row.iter().enumerate() {
                acc += df[a] * pab * dg[b];
            }
        }
        Ok(acc)
    }

    /// Deterministic phase points: the closure samples for `x`, momenta
    /// from a Halton sequence in `[-1, 1]`.
    pub fn phase_samples(&self, count: usize) -> Vec<Vec<f64>> {
        let xs = &self.closure.samples;
        let ps = halton_samples(&vec![(-1.0, 1.0); self.momenta() + 1], count + 7);
        (0..count)
            .map(|k| {
                let mut z = xs[k % xs.len()].clone();
                // skip the first Halton axis so momenta decorrelate from x
                z.extend_from_slice(&ps[k + 7][1..]);
                z
            })
            .collect()
    }
}

/// Rewrite a pure-gauge system in the variables `π` with `p_ᾱ = Z^i_ᾱ π_i`;
/// the bracket becomes canonical and the drift is absorbed into
/// `H_P(x, π) = H(x, p(x, π)) + π·V(x)`.
pub fn canonicalize_pure_gauge(hs: &HamiltonianSystem) -> Result<HamiltonianSystem, HamError> {
    if !hs.closure.pure_gauge || hs.form != Form::Reduced {
        return Err(HamError::NotPureGauge {
            m_bar: hs.closure.m_bar(),
            n: hs.n(),
        });
    }
    let mut out = hs.clone();
    out.form = Form::Canonical;
    Ok(out)
}

/// `π` from `p` at the state `x` (pure-gauge systems only).
pub fn momenta_to_canonical<T: Level>(
    hs: &HamiltonianSystem,
    x: &[T],
    p: &[T],
) -> Result<Vec<T>, HamError> {
    // columns of Zᵀ: column i holds Z^i_ᾱ over ᾱ
    let n = x.len();
    let values = hs
        .closure
        .basis
        .iter()
        .map(|f| f.eval(x))
        .collect::<Result<Vec<_>, _>>()?;
    let cols: Vec<Vec<T>> = (0..n)
        .map(|i| values.iter().map(|z| z[i].clone()).collect())
        .collect();
    Ok(solve(&cols, p)?)
}

/// `p_ᾱ = Z^i_ᾱ π_i`.
pub fn canonical_to_momenta(
    hs: &HamiltonianSystem,
    x: &[f64],
    pi: &[f64],
) -> Result<Vec<f64>, HamError> {
    hs.closure
        .basis
        .iter()
        .map(|f| Ok(f.eval(x)?.iter().zip(pi).map(|(a, b)| a * b).sum()))
        .collect()
}

/// Largest deviation of the bracket of `(x, π(x, p))`, pushed forward from
/// the reduced bracket by the Jacobian of the change of variables, from the
/// canonical one.
pub fn canonical_defect(hs: &HamiltonianSystem, z: &[f64]) -> Result<f64, HamError> {
    if !hs.closure.pure_gauge || hs.form != Form::Reduced {
        return Err(HamError::NotPureGauge {
            m_bar: hs.closure.m_bar(),
            n: hs.n(),
        });
    }
    let n = hs.n();
    let d = 2 * n;
    let seeded: Vec<D1> = Dual::variables(z);
    let pi = momenta_to_canonical(hs, &seeded[..n], &seeded[n..])?;
    // J = ∂(x, π)/∂(x, p)
    let mut jac = vec![vec![0.0; d]; d];
    for i in 0..n {
        jac[i][i] = 1.0;
        for b in 0..d {
            jac[n + i][b] = pi[i].partial(b);
        }
    }
    let p0 = hs.poisson::<f64>(z)?;
    let mut worst = 0.0_f64;
    for a in 0..d {
        for b in 0..d {
            let mut acc = 0.0;
            for c in 0..d {
                for e in 0..d {
                    acc += jac[a][c] * p0[c][e] * jac[b][e];
                }
            }
            let want = if b == a + n && a < n {
                1.0
            } else if a == b + n && b < n {
                -1.0
            } else {
                0.0
            };
            worst = worst.max((acc - want).abs());
        }
    }
    Ok(worst)
}
