//! Closed-form orbits `r(φ)` of the Coulomb case.
//!
//! With `s = 1 − 8Km/M²`, `u = 1/r` obeys `u″ + s·u = mα/M²`, so the orbit
//! is a conic in the rescaled angle `(φ − φ₀)/γ`, `γ = 1/√|s|`, when `s > 0`
//! and a hyperbolic-function spiral when `s < 0`.

use std::fmt;

use super::{CentralError, CentralFieldParams, CRITICAL_K_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrbitTag {
    /// `K < M²/8m`: `r = p/(1 + e cos((φ−φ₀)/γ))`.
    PrecessingConic,
    /// `K = M²/8m`: `r = 2M²α/(mα²(φ−φ₀)² − 2M²E)`.
    CriticalK,
    /// `K > M²/8m`, `E < 0`.
    BoundedFallSpiral,
    /// `K > M²/8m`, `0 ≤ E < mα²γ²/(2M²)`.
    UnboundSpiralLow,
    /// `K > M²/8m`, `E = mα²γ²/(2M²)`.
    UnboundSpiralCritical,
    /// `K > M²/8m`, `E > mα²γ²/(2M²)`.
    UnboundSpiralHigh,
}

impl fmt::Display for OrbitTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrbitClass {
    pub tag: OrbitTag,
    pub gamma: f64,
    pub e: f64,
    pub p_latus: f64,
    pub phi0: f64,
    /// Evaluate the branch at `−w` instead of `w`. Only the exponential and
    /// `sinh` branches are not even in `w` and may need it.
    pub mirror: bool,
    pub m: f64,
    pub alpha: f64,
    pub angular_momentum: f64,
    pub energy: f64,
}

/// Pick the branch and compute `γ`, `e` and the semi-latus rectum.
pub fn classify(params: &CentralFieldParams) -> Result<OrbitClass, CentralError> {
    params.check()?;
    if !params.is_coulomb() {
        return Err(CentralError::NotCoulomb);
    }
    let (m, alpha, big_m, energy) = (
        params.m,
        params.alpha,
        params.angular_momentum,
        params.energy,
    );
    if big_m == 0.0 {
        return Err(CentralError::ZeroAngularMomentum);
    }
    let mm = big_m * big_m;
    let s = 1.0 - 8.0 * params.k * m / mm;
    let base = OrbitClass {
        tag: OrbitTag::CriticalK,
        gamma: f64::INFINITY,
        e: 1.0,
        p_latus: 0.0,
        phi0: 0.0,
        mirror: false,
        m,
        alpha,
        angular_momentum: big_m,
        energy,
    };
    if s.abs() <= CRITICAL_K_TOL {
        return Ok(base);
    }
    let gamma = 1.0 / s.abs().sqrt();
    let g2 = gamma * gamma;
    let e = (1.0 + s.signum() * 2.0 * energy * mm / (g2 * m * alpha * alpha))
        .abs()
        .sqrt();
    let p_latus = mm / (g2 * m * alpha);
    let tag = if s > 0.0 {
        OrbitTag::PrecessingConic
    } else {
        let threshold = m * alpha * alpha * g2 / (2.0 * mm);
        if energy < 0.0 {
            OrbitTag::BoundedFallSpiral
        } else if (energy - threshold).abs() <= CRITICAL_K_TOL * threshold {
            OrbitTag::UnboundSpiralCritical
        } else if energy < threshold {
            OrbitTag::UnboundSpiralLow
        } else {
            OrbitTag::UnboundSpiralHigh
        }
    };
    Ok(OrbitClass {
        tag,
        gamma,
        e,
        p_latus,
        ..base
    })
}

/// Radius on the orbit at angle `phi`.
pub fn oracle_r_of_phi(cls: &OrbitClass, phi: f64) -> Result<f64, CentralError> {
    cls.r_of_phi(phi)
}

impl OrbitClass {
    /// Branch variable: `(φ − φ₀)/γ`, or `φ − φ₀` on the critical branch.
    fn w(&self, phi: f64) -> f64 {
        let w = if self.tag == OrbitTag::CriticalK {
            phi - self.phi0
        } else {
            (phi - self.phi0) / self.gamma
        };
        if self.mirror {
            -w
        } else {
            w
        }
    }

    fn r_of_w(&self, w: f64) -> Option<f64> {
        let (e, p) = (self.e, self.p_latus);
        let r = match self.tag {
            OrbitTag::PrecessingConic => p / (1.0 + e * w.cos()),
            OrbitTag::CriticalK => {
                let mm = self.angular_momentum * self.angular_momentum;
                let den = self.m * self.alpha * self.alpha * w * w - 2.0 * mm * self.energy;
                2.0 * mm * self.alpha / den
            }
            OrbitTag::BoundedFallSpiral => {
                p / (e * e * w.cosh() - e * (e * e - 1.0).sqrt() * w.sinh() - 1.0)
            }
            OrbitTag::UnboundSpiralLow => p / (e * w.cosh() - 1.0),
            OrbitTag::UnboundSpiralCritical => p * w.exp() / (1.0 - w.exp()),
            OrbitTag::UnboundSpiralHigh => p / (e * (-w).sinh() - 1.0),
        };
        (r.is_finite() && r > 0.0).then_some(r)
    }

    pub fn r_of_phi(&self, phi: f64) -> Result<f64, CentralError> {
        self.r_of_w(self.w(phi))
            .ok_or(CentralError::OutsideDomain { phi, tag: self.tag })
    }

    /// Perihelion `p/(1 + e)` of a precessing conic.
    pub fn perihelion(&self) -> Option<f64> {
        (self.tag == OrbitTag::PrecessingConic).then(|| self.p_latus / (1.0 + self.e))
    }

    /// Angle between successive perihelia, `2πγ`.
    pub fn apsidal_period(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.gamma
    }

    /// Fix `φ₀` so the orbit passes through `r0` at angle `phi` moving
    /// radially with the sign of `rdot`.
    ///
    /// `φ̇ = M/(m r²)` has the sign of `M`, so `ṙ` and `dr/dw` agree in sign
    /// exactly when `M > 0`. On each branch `r(w) = r0` is inverted in
    /// closed form and the root on the matching side is taken.
    pub fn fit_phase(&mut self, r0: f64, rdot: f64, phi: f64) -> Result<(), CentralError> {
        if r0 <= 0.0 {
            return Err(CentralError::Radius(r0));
        }
        let want = rdot * self.angular_momentum.signum();
        let (e, p) = (self.e, self.p_latus);
        self.mirror = false;
        // w ≥ 0 of the even branches; the returned sign is that of dr/dw there
        let w = match self.tag {
            OrbitTag::PrecessingConic => {
                let c = if e > 0.0 {
                    ((p / r0 - 1.0) / e).clamp(-1.0, 1.0)
                } else {
                    1.0
                };
                let w = c.acos();
                if want < 0.0 {
                    -w
                } else {
                    w
                }
            }
            OrbitTag::CriticalK => {
                let mm = self.angular_momentum * self.angular_momentum;
                let w2 = (2.0 * mm * self.alpha / r0 + 2.0 * mm * self.energy)
                    / (self.m * self.alpha * self.alpha);
                let w = w2.max(0.0).sqrt();
                if want > 0.0 {
                    -w
                } else {
                    w
                }
            }
            OrbitTag::BoundedFallSpiral | OrbitTag::UnboundSpiralLow => {
                let shift = if self.tag == OrbitTag::BoundedFallSpiral {
                    e.acosh()
                } else {
                    0.0
                };
                let v = ((p / r0 + 1.0) / e).max(1.0).acosh();
                shift + if want > 0.0 { -v } else { v }
            }
            OrbitTag::UnboundSpiralCritical => {
                // r = p/(e^{−w} − 1) grows with w
                self.mirror = want < 0.0;
                -(1.0 + p / r0).ln()
            }
            OrbitTag::UnboundSpiralHigh => {
                // r = p/(e sinh(−w) − 1) grows with w
                self.mirror = want < 0.0;
                -((p / r0 + 1.0) / e).asinh()
            }
        };
        let w = if self.mirror { -w } else { w };
        self.phi0 = if self.tag == OrbitTag::CriticalK {
            phi - w
        } else {
            phi - self.gamma * w
        };
        let back = self.r_of_phi(phi)?;
        if (back - r0).abs() > 1e-8 * r0 {
            return Err(CentralError::NoPhase { r: r0 });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn k_zero_is_ordinary_ellipse() {
        let cls = classify(&CentralFieldParams::default().with_orbit(1.0, -0.3, 0.0)).unwrap();
        assert_eq!(cls.tag, OrbitTag::PrecessingConic);
        assert_eq!(cls.gamma, 1.0);
        // e² = 1 + 2EM²/(mα²)
        assert!(close(cls.e, (1.0 - 0.6_f64).sqrt(), 1e-15));
    }

    #[test]
    fn figure_parameters_classify() {
        let one = classify(&CentralFieldParams::from_shape(
            1.0,
            1.0,
            1.0,
            8.0 / 7.0,
            0.7,
            true,
        ))
        .unwrap();
        assert_eq!(one.tag, OrbitTag::PrecessingConic);
        assert!(close(one.gamma, 8.0 / 7.0, 1e-14));
        assert!(close(one.e, 0.7, 1e-14));
        let two = classify(&CentralFieldParams::from_shape(
            1.0, 1.0, 1.0, 3.0, 1.5, false,
        ))
        .unwrap();
        assert_eq!(two.tag, OrbitTag::BoundedFallSpiral);
        assert!(close(two.gamma, 3.0, 1e-14));
        assert!(close(two.e, 1.5, 1e-14));
        assert!(close(two.p_latus, 1.0 / 9.0, 1e-14));
    }

    #[test]
    fn branch_selection_follows_thresholds() {
        // K = 5/36 gives γ = 3; the energy threshold is mα²γ²/(2M²) = 4.5
        let at = |energy: f64| {
            classify(&CentralFieldParams::default().with_orbit(1.0, energy, 5.0 / 36.0))
                .unwrap()
                .tag
        };
        assert_eq!(at(-0.1), OrbitTag::BoundedFallSpiral);
        assert_eq!(at(0.0), OrbitTag::UnboundSpiralLow);
        assert_eq!(at(4.5), OrbitTag::UnboundSpiralCritical);
        assert_eq!(at(4.6), OrbitTag::UnboundSpiralHigh);
        let crit = classify(&CentralFieldParams::default().with_orbit(1.0, -0.5, 0.125)).unwrap();
        assert_eq!(crit.tag, OrbitTag::CriticalK);
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        assert!(matches!(
            classify(&CentralFieldParams::default().with_orbit(0.0, -0.5, 0.0)),
            Err(CentralError::ZeroAngularMomentum)
        ));
        let p = CentralFieldParams {
            potential: "-alpha/r^2".into(),
            ..Default::default()
        };
        assert!(matches!(classify(&p), Err(CentralError::NotCoulomb)));
    }

    #[test]
    fn perihelion_at_phase_origin() {
        let cls = classify(&CentralFieldParams::from_shape(
            1.0,
            1.0,
            1.0,
            8.0 / 7.0,
            0.7,
            true,
        ))
        .unwrap();
        let r = cls.r_of_phi(cls.phi0).unwrap();
        assert!(close(r, cls.p_latus / 1.7, 1e-15));
        let next = cls.r_of_phi(cls.phi0 + cls.apsidal_period()).unwrap();
        assert!(close(next, r, 1e-14));
    }

    #[test]
    fn critical_branch_at_phase_origin() {
        let cls =
            classify(&CentralFieldParams::default().with_orbit(1.3, -0.4, 1.69 / 8.0)).unwrap();
        assert_eq!(cls.tag, OrbitTag::CriticalK);
        assert!(close(cls.r_of_phi(cls.phi0).unwrap(), 1.0 / 0.4, 1e-14));
    }

    #[test]
    fn fit_recovers_radius_and_direction() {
        let params = [
            CentralFieldParams::from_shape(1.0, 1.0, 1.0, 8.0 / 7.0, 0.7, true),
            CentralFieldParams::from_shape(1.0, 1.0, 1.0, 3.0, 1.5, false),
            CentralFieldParams::default().with_orbit(1.0, 1.0, 5.0 / 36.0),
            CentralFieldParams::default().with_orbit(1.0, 4.5, 5.0 / 36.0),
            CentralFieldParams::default().with_orbit(1.0, 7.0, 5.0 / 36.0),
            CentralFieldParams::default().with_orbit(1.0, -0.4, 0.125),
        ];
        for p in &params {
            let base = classify(p).unwrap();
            for &(phi, sign) in &[(0.3, 1.0), (-1.1, -1.0)] {
                // pick a radius on the orbit by evaluating an arbitrary phase
                let r0 = (0..4000)
                    .map(|k| base.r_of_phi(base.phi0 + 0.01 * k as f64 - 20.0))
                    .find_map(Result::ok)
                    .unwrap();
                let mut cls = base.clone();
                cls.fit_phase(r0, sign, phi).unwrap();
                assert!(
                    close(cls.r_of_phi(phi).unwrap(), r0, 1e-10),
                    "{:?}",
                    cls.tag
                );
                let h = 1e-6;
                let slope =
                    (cls.r_of_phi(phi + h).unwrap() - cls.r_of_phi(phi - h).unwrap()) / (2.0 * h);
                assert!(slope * sign >= -1e-9, "{:?} slope {slope}", cls.tag);
            }
        }
    }

    #[test]
    fn outside_domain_is_an_error() {
        let cls = classify(&CentralFieldParams::default().with_orbit(1.0, 0.5, 0.0)).unwrap();
        // hyperbola with e = √2: the denominator vanishes at cos w = −1/√2
        assert!(matches!(
            cls.r_of_phi(cls.phi0 + 3.0),
            Err(CentralError::OutsideDomain { .. })
        ));
    }
}
