use super::linalg::{conditioning, equilibrated_conditioning, lstsq, lstsq_with, qr};
use super::{bracket_from_jets, lie_bracket, GeomError, Level, Provenance, VectorField};
use crate::autodiff::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosureOptions {
    /// Membership and rank threshold, relative to the largest singular value.
    pub rank_tol: f64,
    /// Largest unexplained bracket component tolerated by callers.
    pub closure_tol: f64,
    pub max_sweeps: usize,
}

impl Default for ClosureOptions {
    fn default() -> Self {
        Self {
            rank_tol: 1e-7,
            closure_tol: 1e-6,
            max_sweeps: 16,
        }
    }
}

/// Generators together with the points used for rank decisions.
#[derive(Debug, Clone)]
pub struct Distribution {
    pub generators: Vec<VectorField>,
    pub samples: Vec<Vec<f64>>,
}

impl Distribution {
    /// Fails if the generators are dependent at some sample.
    pub fn new(
        generators: Vec<VectorField>,
        samples: Vec<Vec<f64>>,
        rank_tol: f64,
    ) -> Result<Self, GeomError> {
        for x in &samples {
            let cols = generators
                .iter()
                .map(|g| g.eval(x))
                .collect::<Result<Vec<_>, _>>()?;
            let ratio = conditioning(&cols);
            if ratio <= rank_tol {
                let field = generators
                    .last()
                    .map(|g| g.name.clone())
                    .unwrap_or_default();
                return Err(GeomError::Degenerate {
                    point: x.clone(),
                    ratio,
                    field,
                });
            }
        }
        Ok(Self {
            generators,
            samples,
        })
    }
}

/// One field added by the closure.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRecord {
    pub index: usize,
    pub provenance: Provenance,
    pub sweep: usize,
    /// Largest relative residual of the candidate against the previous basis.
    pub novelty: f64,
}

#[derive(Debug, Clone)]
pub struct ClosureResult {
    /// Original generators first, then the added brackets in order.
    pub basis: Vec<VectorField>,
    /// Number of original generators.
    pub m: usize,
    pub drift: VectorField,
    pub samples: Vec<Vec<f64>>,
    pub log: Vec<GenerationRecord>,
    pub pure_gauge: bool,
    pub options: ClosureOptions,
}

impl ClosureResult {
    pub fn n(&self) -> usize {
        self.drift.dim()
    }

    pub fn m_bar(&self) -> usize {
        self.basis.len()
    }

    /// Largest unexplained bracket component over the samples.
    pub fn max_residual(&self) -> Result<f64, GeomError> {
        let mut worst = 0.0_f64;
        for x in &self.samples {
            worst = worst.max(structure_functions_at(self, x)?.residual);
        }
        Ok(worst)
    }

    /// True when the closure has the one-step shape: the added fields are
    /// exactly `[Z_α, V]` for every original generator, in order, and the
    /// original generators close among themselves.
    pub fn is_one_step(&self) -> Result<bool, GeomError> {
        let m = self.m;
        if self.m_bar() != 2 * m {
            return Ok(false);
        }
        if (0..m).any(|a| self.basis[m + a].provenance != Provenance::DriftBracket(a)) {
            return Ok(false);
        }
        for x in &self.samples {
            let s = structure_functions_at(self, x)?;
            for g in m..2 * m {
                for a in 0..m {
                    for b in 0..m {
                        if s.u[g][a][b].abs() > self.options.closure_tol {
                            return Ok(false);
                        }
                    }
                }
            }
        }
        Ok(true)
    }
}

/// Pointwise structure functions.
#[derive(Debug, Clone)]
pub struct Structure<T> {
    /// `u[γ][α][β]`: coefficient of `Z_γ` in `[Z_α, Z_β]`.
    pub u: Vec<Vec<Vec<T>>>,
    /// `v[α][β]`: coefficient of `Z_β` in `[Z_α, V]`.
    pub v: Vec<Vec<T>>,
    /// Largest unexplained component of any bracket.
    pub residual: f64,
    /// Basis values `Z^i_α` as columns.
    pub basis: Vec<Vec<T>>,
    /// Drift values `V^i`.
    pub drift: Vec<T>,
}

/// Least-squares structure functions of the closed basis at `x`.
pub fn structure_functions_at<T: Level>(
    cl: &ClosureResult,
    x: &[T],
) -> Result<Structure<T>, GeomError> {
    let jets = cl
        .basis
        .iter()
        .map(|f| f.jacobian(x))
        .collect::<Result<Vec<_>, _>>()?;
    let (vd, jd) = cl.drift.jacobian(x)?;
    let cols: Vec<Vec<T>> = jets.iter().map(|(v, _)| v.clone()).collect();
    let real_cols: Vec<Vec<f64>> = cols
        .iter()
        .map(|c| c.iter().map(Scalar::re).collect())
        .collect();
    let ratio = equilibrated_conditioning(&real_cols);
    if ratio <= cl.options.rank_tol {
        return Err(GeomError::Degenerate {
            point: x.iter().map(Scalar::re).collect(),
            ratio,
            field: "closed basis".into(),
        });
    }
    let (q, r) = qr(&cols)?;
    let k = cols.len();
    let mut residual = 0.0_f64;
    let mut track = |res: &[T]| {
        for c in res {
            residual = residual.max(c.re().abs());
        }
    };
    let mut u = vec![vec![vec![T::zero(); k]; k]; k];
    for a in 0..k {
        for b in a + 1..k {
            let br = bracket_from_jets(&jets[a].0, &jets[a].1, &jets[b].0, &jets[b].1);
            let (c, res) = lstsq_with(&q, &r, &cols, &br)?;
            track(&res);
            for (g, cg) in c.into_iter().enumerate() {
                u[g][b][a] = -cg.clone();
                u[g][a][b] = cg;
            }
        }
    }
    let mut v = Vec::with_capacity(k);
    for (va, ja) in &jets {
        let br = bracket_from_jets(va, ja, &vd, &jd);
        let (c, res) = lstsq_with(&q, &r, &cols, &br)?;
        track(&res);
        v.push(c);
    }
    Ok(Structure {
        u,
        v,
        residual,
        basis: cols,
        drift: vd,
    })
}

/// Close `generators` under brackets among themselves and with `drift`.
///
/// Each sweep tries the brackets `[Z_i, Z_j]` (`i < j`, lexicographic) of
/// the basis as it stood when the sweep started, then `[Z_i, V]`. A
/// candidate joins as soon as its least-squares residual against the
/// current basis, relative to the largest singular value of the augmented
/// matrix, exceeds `rank_tol` at some sample.
pub fn close_distribution(
    generators: &[VectorField],
    drift: &VectorField,
    samples: &[Vec<f64>],
    options: ClosureOptions,
) -> Result<ClosureResult, GeomError> {
    let n = drift.dim();
    for g in generators {
        if g.dim() != n {
            return Err(GeomError::Dimension {
                expected: n,
                got: g.dim(),
            });
        }
    }
    let dist = Distribution::new(generators.to_vec(), samples.to_vec(), options.rank_tol)?;
    let mut basis = dist.generators;
    // basis values per sample, kept in step with `basis`
    let mut values: Vec<Vec<Vec<f64>>> = samples
        .iter()
        .map(|x| {
            basis
                .iter()
                .map(|f| f.eval(x))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<_, _>>()?;
    let mut log = Vec::new();

    let mut sweep = 0;
    while basis.len() < n {
        sweep += 1;
        if sweep > options.max_sweeps {
            return Err(GeomError::IterationCap {
                sweeps: options.max_sweeps,
                basis: basis.iter().map(|f| f.name.clone()).collect(),
            });
        }
        let before = basis.len();
        let k = basis.len();
        let mut candidates: Vec<Provenance> = Vec::new();
        for i in 0..k {
            for j in i + 1..k {
                candidates.push(Provenance::Bracket(i, j));
            }
        }
        let mut c = 0;
        let mut drift_phase_started = false;
        loop {
            if c == candidates.len() {
                if drift_phase_started {
                    break;
                }
                drift_phase_started = true;
                candidates.extend((0..basis.len()).map(Provenance::DriftBracket));
                continue;
            }
            if basis.len() == n {
                break;
            }
            let prov = candidates[c];
            c += 1;
            let field = match prov {
                Provenance::Bracket(i, j) => lie_bracket(&basis[i], &basis[j])?,
                Provenance::DriftBracket(i) => lie_bracket(&basis[i], drift)?,
                Provenance::User => unreachable!(),
            };
            let field = field.with_provenance(prov);
            let mut novelty = 0.0_f64;
            let mut cand_values = Vec::with_capacity(samples.len());
            for (x, cols) in samples.iter().zip(&values) {
                let w = field.eval(x)?;
                let (_, res) = lstsq(cols, &w)?;
                let mut aug = cols.clone();
                aug.push(w.clone());
                let smax = super::linalg::singular_values(&aug)[0];
                let rnorm = res.iter().map(|r| r * r).sum::<f64>().sqrt();
                if smax > 0.0 {
                    novelty = novelty.max(rnorm / smax);
                }
                cand_values.push(w);
            }
            if novelty <= options.rank_tol {
                continue;
            }
            for ((x, cols), w) in samples.iter().zip(values.iter_mut()).zip(cand_values) {
                cols.push(w);
                let ratio = conditioning(cols);
                if ratio <= options.rank_tol {
                    return Err(GeomError::Degenerate {
                        point: x.clone(),
                        ratio,
                        field: field.name.clone(),
                    });
                }
            }
            log.push(GenerationRecord {
                index: basis.len(),
                provenance: prov,
                sweep,
                novelty,
            });
            basis.push(field);
        }
        if basis.len() == before {
            break;
        }
    }

    let pure_gauge = basis.len() == n;
    Ok(ClosureResult {
        basis,
        m: generators.len(),
        drift: drift.clone(),
        samples: samples.to_vec(),
        log,
        pure_gauge,
        options,
    })
}

/// Largest violation of the identities that the Jacobi identity imposes on
/// the structure functions at `x`:
///
/// `U^γ_αβ V^ρ_γ + U^ρ_γα V^γ_β − U^ρ_γβ V^γ_α − V(U^ρ_αβ) − Z_α(V^ρ_β) + Z_β(V^ρ_α) = 0`
/// and `U^ω_αβ U^ρ_ωγ − Z_γ(U^ρ_αβ) + cycle(α, β, γ) = 0`.
pub fn jacobi_consequences_at(cl: &ClosureResult, x: &[f64]) -> Result<f64, GeomError> {
    let st = structure_functions_at(cl, &crate::autodiff::Dual::variables(x))?;
    let k = cl.m_bar();
    let n = x.len();
    let u = |g: usize, a: usize, b: usize| st.u[g][a][b].value;
    let v = |a: usize, b: usize| st.v[a][b].value;
    // directional derivative along a basis field or the drift
    let along =
        |dir: &[f64], f: &crate::autodiff::D1| (0..n).map(|j| dir[j] * f.partial(j)).sum::<f64>();
    let zcol: Vec<Vec<f64>> = st
        .basis
        .iter()
        .map(|c| c.iter().map(|d| d.value).collect())
        .collect();
    let drift: Vec<f64> = st.drift.iter().map(|d| d.value).collect();
    let mut worst = 0.0_f64;
    for a in 0..k {
        for b in 0..k {
            for r in 0..k {
                let mut e = 0.0;
                for g in 0..k {
                    e += u(g, a, b) * v(g, r) + u(r, g, a) * v(b, g) - u(r, g, b) * v(a, g);
                }
                e -= along(&drift, &st.u[r][a][b]);
                e -= along(&zcol[a], &st.v[b][r]);
                e += along(&zcol[b], &st.v[a][r]);
                worst = worst.max(e.abs());
                for c in 0..k {
                    let mut e = 0.0;
                    for (a, b, c) in [(a, b, c), (b, c, a), (c, a, b)] {
                        for w in 0..k {
                            e += u(w, a, b) * u(r, w, c);
                        }
                        e -= along(&zcol[c], &st.u[r][a][b]);
                    }
                    worst = worst.max(e.abs());
                }
            }
        }
    }
    Ok(worst)
}

const PRIMES: [u32; 24] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
];

fn radical_inverse(mut i: u64, base: u32) -> f64 {
    let b = base as f64;
    let mut f = 1.0 / b;
    let mut out = 0.0;
    while i > 0 {
        out += f * (i % base as u64) as f64;
        i /= base as u64;
        f /= b;
    }
    out
}

/// `count` Halton points in the box `bounds` (one `(lo, hi)` per axis),
/// skipping the origin of the sequence.
pub fn halton_samples(bounds: &[(f64, f64)], count: usize) -> Vec<Vec<f64>> {
    assert!(
        bounds.len() <= PRIMES.len(),
        "at most {} sampled axes",
        PRIMES.len()
    );
    (1..=count as u64)
        .map(|i| {
            bounds
                .iter()
                .zip(PRIMES)
                .map(|(&(lo, hi), p)| lo + (hi - lo) * radical_inverse(i, p))
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;

    fn m1() -> BTreeMap<String, f64> {
        [("m".to_string(), 1.0)].into()
    }

    fn central() -> (Vec<VectorField>, VectorField, Vec<Vec<f64>>) {
        let z = VectorField::from_exprs("Z", &["1", "0", "0"], &m1()).unwrap();
        let v = VectorField::from_exprs("V", &["0", "x3/(m*x1^2)", "0"], &m1()).unwrap();
        let samples = halton_samples(&[(0.5, 3.0), (0.0, 6.0), (0.5, 2.0)], 32);
        (vec![z], v, samples)
    }

    #[test]
    fn central_field_closes_with_one_extra_field() {
        let (z, v, s) = central();
        let cl = close_distribution(&z, &v, &s, ClosureOptions::default()).unwrap();
        assert_eq!(cl.m_bar(), 2);
        assert!(!cl.pure_gauge);
        assert_eq!(cl.basis[1].provenance, Provenance::DriftBracket(0));
        assert!(cl.is_one_step().unwrap());
        assert!(cl.max_residual().unwrap() < 1e-12);

        let st = structure_functions_at(&cl, &[1.0, 0.0, 1.0]).unwrap();
        assert!((st.u[1][0][1] + 3.0).abs() < 1e-14);
        assert!((st.u[1][1][0] - 3.0).abs() < 1e-14);
        assert!(st.u[0][0][1].abs() < 1e-14);
        assert!((st.v[0][1] - 1.0).abs() < 1e-14 && st.v[0][0].abs() < 1e-14);
        assert!(st.v[1].iter().all(|c| c.abs() < 1e-14));

        let st = structure_functions_at(&cl, &[2.0, 0.0, 1.0]).unwrap();
        assert!((st.u[1][0][1] + 1.5).abs() < 1e-14);

        for x in s.iter().take(20) {
            assert!(jacobi_consequences_at(&cl, x).unwrap() < 1e-8);
        }
    }

    #[test]
    fn commuting_frame_is_pure_gauge() {
        let p = BTreeMap::new();
        let z1 = VectorField::from_exprs("Z1", &["1", "0"], &p).unwrap();
        let z2 = VectorField::from_exprs("Z2", &["0", "1"], &p).unwrap();
        let v = VectorField::from_exprs("V", &["0", "0"], &p).unwrap();
        let s = halton_samples(&[(-1.0, 1.0), (-1.0, 1.0)], 8);
        let cl = close_distribution(&[z1, z2], &v, &s, ClosureOptions::default()).unwrap();
        assert!(cl.pure_gauge && cl.log.is_empty());
        let st = structure_functions_at(&cl, &s[3]).unwrap();
        assert_eq!(st.residual, 0.0);
        assert!(st.u.iter().flatten().flatten().all(|c| *c == 0.0));
        assert!(st.v.iter().flatten().all(|c| *c == 0.0));
    }

    #[test]
    fn closing_again_adds_nothing() {
        let (z, v, s) = central();
        let cl = close_distribution(&z, &v, &s, ClosureOptions::default()).unwrap();
        let again =
            close_distribution(&cl.basis, &cl.drift, &s, ClosureOptions::default()).unwrap();
        assert!(again.log.is_empty());
        assert_eq!(again.m_bar(), cl.m_bar());
    }

    #[test]
    fn dependent_generators_are_rejected() {
        let p = BTreeMap::new();
        let z1 = VectorField::from_exprs("Z1", &["1", "x1"], &p).unwrap();
        let z2 = VectorField::from_exprs("Z2", &["2", "2*x1"], &p).unwrap();
        let v = VectorField::from_exprs("V", &["0", "0"], &p).unwrap();
        let s = vec![vec![0.3, 0.1]];
        let err = close_distribution(&[z1, z2], &v, &s, ClosureOptions::default()).unwrap_err();
        match err {
            GeomError::Degenerate { point, .. } => assert_eq!(point, vec![0.3, 0.1]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rank_drop_on_a_sample_fails_loudly() {
        // [Z, V] = (0, x1) vanishes on the sample with x1 = 0
        let p = BTreeMap::new();
        let z = VectorField::from_exprs("Z", &["1", "0"], &p).unwrap();
        let v = VectorField::from_exprs("V", &["0", "x1^2/2"], &p).unwrap();
        let s = vec![vec![1.0, 0.0], vec![0.0, 0.0]];
        assert!(matches!(
            close_distribution(&[z], &v, &s, ClosureOptions::default()),
            Err(GeomError::Degenerate { .. })
        ));
    }

    #[test]
    fn halton_points_fill_the_box() {
        let pts = halton_samples(&[(0.5, 3.0), (-1.0, 1.0)], 32);
        assert_eq!(pts.len(), 32);
        assert_eq!(pts[0], vec![0.5 + 2.5 * 0.5, -1.0 + 2.0 / 3.0]);
        assert!(pts
            .iter()
            .all(|p| (0.5..3.0).contains(&p[0]) && (-1.0..1.0).contains(&p[1])));
    }
}
