//! Noncrossing-subspace certificates, Schur-Horn / Fan orbitope membership
//! and relaxation-tightness reports for linear inverse spectral problems.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dual_ellipsoid::{self, DualOptions};
use crate::error::{Error, Result};
use crate::lagrangian::{Component, ObjectiveFamily};
use crate::linalg::{self, Mat, Vector};
use crate::manifolds::ManifoldSpec;
use crate::oracle;
use crate::sections::{LiepSection, LisvSection, Section};

/// A gap at or below this marks a crossing.
pub const GAP_TOL: f64 = 1e-8;
/// Random starts used by `min_gap_on_span` on top of the ±eⱼ starts.
pub const DEFAULT_BUDGET: usize = 24;
const MAX_ITERS: usize = 300;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectralMode {
    Eigen,
    Singular,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    CertifiedHeuristic,
    CrossingFound,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NoncrossingCertificate {
    pub level: usize,
    /// Smallest leading gap found; +∞ when no gap is constrained (level 0).
    pub min_gap: f64,
    /// Unit coefficient vector attaining `min_gap`.
    pub witness: Vec<f64>,
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub full_rank_min_sv: Option<f64>,
}

/// Largest ℓ with `s_ℓ > s_{ℓ+1}` (1-based); entries after ℓ are all equal.
pub fn level_from_spectrum(spectrum: &[f64]) -> usize {
    (0..spectrum.len().saturating_sub(1)).rev().find(|&i| spectrum[i] > spectrum[i + 1]).map_or(0, |i| i + 1)
}

fn gram_ratio(a: &[Mat]) -> f64 {
    let k = a.len();
    let g = Mat::from_fn(k, k, |i, j| a[i].dot(&a[j]));
    let ev = linalg::sym_eigvals(&g);
    if ev[0] <= 0.0 {
        0.0
    } else {
        ev[k - 1] / ev[0]
    }
}

struct GapEval {
    value: f64,
    grad: Vector,
    sv_min: Option<(f64, Vector)>,
}

/// Gap objective at coefficient vector u with Hellmann–Feynman gradients.
fn gap_eval(a: &[Mat], u: &Vector, level: usize, mode: SpectralMode, want_sv: bool) -> GapEval {
    let k = a.len();
    let mut s = Mat::zeros(a[0].nrows(), a[0].ncols());
    for (aj, &uj) in a.iter().zip(u.iter()) {
        s += aj * uj;
    }
    let mut best = f64::INFINITY;
    let mut grad = Vector::zeros(k);
    let mut sv_min = None;
    match mode {
        SpectralMode::Eigen => {
            let n = s.nrows();
            let (mu, v) = linalg::sym_eig(&s);
            for i in 0..level.min(n - 1) {
                let gap = mu[i] - mu[i + 1];
                if gap < best {
                    best = gap;
                    let (vi, vj) = (v.column(i), v.column(i + 1));
                    grad = Vector::from_iterator(k, a.iter().map(|aj| {
                        let aj = linalg::sym(aj);
                        vi.dot(&(&aj * vi)) - vj.dot(&(&aj * vj))
                    }));
                }
            }
        }
        SpectralMode::Singular => {
            let m = s.ncols();
            let (uu, mu, vv) = linalg::svd(&s);
            let dsv = |i: usize| -> Vector {
                let (ui, vi) = (uu.column(i), vv.column(i));
                Vector::from_iterator(k, a.iter().map(|aj| ui.dot(&(aj * vi))))
            };
            for i in 0..level.min(m) {
                let next = if i + 1 < m { mu[i + 1] } else { 0.0 };
                let gap = mu[i] - next;
                if gap < best {
                    best = gap;
                    grad = if i + 1 < m { dsv(i) - dsv(i + 1) } else { dsv(i) };
                }
            }
            if want_sv {
                sv_min = Some((mu[m - 1], dsv(m - 1)));
            }
        }
    }
    GapEval { value: best, grad, sv_min }
}

/// Projected subgradient descent of `φ` on the unit sphere with an angular
/// Armijo backtracking step.
fn descend(u0: Vector, phi: &dyn Fn(&Vector) -> (f64, Vector)) -> (f64, Vector) {
    let mut u = u0.normalize();
    let (mut val, mut g) = phi(&u);
    let mut step: f64 = 0.5;
    for _ in 0..MAX_ITERS {
        let gt = &g - &u * u.dot(&g);
        let gn = gt.norm();
        if gn < 1e-14 || val <= 0.0 {
            break;
        }
        let dir = gt / gn;
        let mut accepted = false;
        let mut s = step;
        while s > 1e-12 {
            let cand = (&u * s.cos() - &dir * s.sin()).normalize();
            let (cv, cg) = phi(&cand);
            if cv <= val - 1e-4 * s * gn {
                u = cand;
                val = cv;
                g = cg;
                accepted = true;
                break;
            }
            s *= 0.5;
        }
        if !accepted {
            break;
        }
        step = (2.0 * s).min(0.5);
    }
    (val, u)
}

fn starts(k: usize, budget: usize, seed: u64) -> Vec<Vector> {
    let mut out = Vec::with_capacity(2 * k + budget);
    for j in 0..k {
        for sgn in [1.0, -1.0] {
            let mut e = Vector::zeros(k);
            e[j] = sgn;
            out.push(e);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..budget {
        out.push(linalg::gaussian(k, 1, &mut rng).column(0).normalize());
    }
    out
}

fn check_span(a: &[Mat]) -> Result<()> {
    if a.is_empty() {
        return Err(Error::ShapeMismatch("empty span".into()));
    }
    let shape = a[0].shape();
    if a.iter().any(|m| m.shape() != shape) {
        return Err(Error::ShapeMismatch("span matrices differ in shape".into()));
    }
    let ratio = gram_ratio(a);
    if ratio <= 1e-10 {
        return Err(Error::DegenerateSpan { ratio });
    }
    Ok(())
}

/// Heuristic certificate that every unit combination `S(u) = Σ uⱼAⱼ` has
/// its `level` leading eigenvalues (singular values) simple.
pub fn min_gap_on_span(a: &[Mat], level: usize, mode: SpectralMode, budget: usize, seed: u64) -> Result<NoncrossingCertificate> {
    min_gap_on_span_with(a, level, mode, false, budget, seed)
}

/// As `min_gap_on_span`; with `require_full_rank` the smallest singular
/// value over the span is also minimized and enters the verdict.
pub fn min_gap_on_span_with(
    a: &[Mat],
    level: usize,
    mode: SpectralMode,
    require_full_rank: bool,
    budget: usize,
    seed: u64,
) -> Result<NoncrossingCertificate> {
    if mode == SpectralMode::Eigen && level == 0 {
        return Err(Error::InvalidArgument("level must be at least 1".into()));
    }
    check_span(a)?;
    let k = a.len();
    let st = starts(k, budget, seed);
    let (min_gap, witness) = if level == 0 {
        (f64::INFINITY, st[0].clone())
    } else {
        let phi = |u: &Vector| {
            let e = gap_eval(a, u, level, mode, false);
            (e.value, e.grad)
        };
        let runs: Vec<(f64, Vector)> = st.par_iter().map(|u| descend(u.clone(), &phi)).collect();
        best_of(runs)
    };
    let full_rank_min_sv = if mode == SpectralMode::Singular {
        let phi = |u: &Vector| {
            let e = gap_eval(a, u, 0, mode, true);
            e.sv_min.expect("singular value requested")
        };
        let runs: Vec<(f64, Vector)> = st.par_iter().map(|u| descend(u.clone(), &phi)).collect();
        Some(best_of(runs).0)
    } else {
        None
    };
    let crossing = min_gap <= GAP_TOL || (require_full_rank && full_rank_min_sv.is_some_and(|s| s <= GAP_TOL));
    Ok(NoncrossingCertificate {
        level,
        min_gap: min_gap.max(0.0),
        witness: witness.iter().copied().collect(),
        verdict: if crossing { Verdict::CrossingFound } else { Verdict::CertifiedHeuristic },
        full_rank_min_sv,
    })
}

fn best_of(runs: Vec<(f64, Vector)>) -> (f64, Vector) {
    let mut best = runs[0].clone();
    for r in runs.into_iter().skip(1) {
        if r.0 < best.0 {
            best = r;
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Membership {
    pub inside: bool,
    /// Smallest slack of the majorization inequalities (negative outside).
    pub margin: f64,
}

/// Permutohedron (eigen mode) or signed-permutohedron (singular mode)
/// membership of `y` by partial sums of sorted entries.
pub fn orbitope_membership(y: &[f64], spectrum: &[f64], mode: SpectralMode) -> Result<Membership> {
    if y.len() != spectrum.len() {
        return Err(Error::ShapeMismatch(format!("{} entries vs spectrum of length {}", y.len(), spectrum.len())));
    }
    let mut ys: Vec<f64> = match mode {
        SpectralMode::Eigen => y.to_vec(),
        SpectralMode::Singular => y.iter().map(|v| v.abs()).collect(),
    };
    ys.sort_by(|a, b| b.total_cmp(a));
    let mut sp = spectrum.to_vec();
    sp.sort_by(|a, b| b.total_cmp(a));
    let scale = 1.0 + sp.iter().map(|v| v.abs()).sum::<f64>();
    let tol = 1e-12 * scale;
    let n = ys.len();
    let (mut py, mut ps) = (0.0, 0.0);
    let mut margin = f64::INFINITY;
    let upto = if mode == SpectralMode::Eigen { n.saturating_sub(1) } else { n };
    for i in 0..n {
        py += ys[i];
        ps += sp[i];
        if i < upto {
            margin = margin.min(ps - py);
        }
    }
    let mut inside = margin >= -tol;
    if mode == SpectralMode::Eigen {
        let diff = (ps - py).abs();
        if diff > tol {
            inside = false;
            margin = margin.min(-diff);
        }
    }
    if n == 1 && mode == SpectralMode::Eigen && margin.is_infinite() {
        margin = 0.0;
    }
    Ok(Membership { inside, margin })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectralInstance {
    pub mode: SpectralMode,
    #[serde(rename = "A", with = "mats")]
    pub a: Vec<Mat>,
    pub spectrum: Vec<f64>,
    #[serde(default)]
    pub rhs: Vec<f64>,
}

mod mats {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::linalg::{self, Mat};

    pub fn serialize<S: Serializer>(m: &[Mat], s: S) -> Result<S::Ok, S::Error> {
        m.iter().map(linalg::to_rows).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Mat>, D::Error> {
        let raw = Vec::<Vec<Vec<f64>>>::deserialize(d)?;
        Ok(raw.iter().map(|r| linalg::from_rows(r)).collect())
    }
}

impl SpectralInstance {
    pub fn validate(&self) -> Result<()> {
        if self.a.is_empty() {
            return Err(Error::ShapeMismatch("instance has no matrices".into()));
        }
        if self.rhs.len() + 1 != self.a.len() {
            return Err(Error::ShapeMismatch(format!("{} matrices need {} right-hand sides, got {}", self.a.len(), self.a.len() - 1, self.rhs.len())));
        }
        self.section().map(|_| ())
    }

    pub fn section(&self) -> Result<Box<dyn Section>> {
        match self.mode {
            SpectralMode::Eigen => {
                ManifoldSpec::FixedEigenvalues { lambda: self.spectrum.clone() }.validate()?;
                Ok(Box::new(LiepSection::new(self.a.clone(), self.spectrum.clone())?))
            }
            SpectralMode::Singular => Ok(Box::new(LisvSection::new(self.a.clone(), self.spectrum.clone())?)),
        }
    }

    /// The same problem posed on a sphere or Stiefel manifold, available when
    /// the spectrum takes at most two values (eigen mode) or is constant
    /// (singular mode). Returns the family and the map back to matrices.
    pub fn gradient_family(&self) -> Result<(ObjectiveFamily, Box<dyn Fn(&Mat) -> Mat + Send + Sync>)> {
        let s = &self.spectrum;
        match self.mode {
            SpectralMode::Eigen => {
                let n = s.len();
                let level = level_from_spectrum(s);
                let distinct_top = s[..level].iter().all(|&v| v == s[0]);
                if level == 0 || !distinct_top {
                    return Err(Error::UnsupportedManifold { op: "gradient reformulation".into(), manifold: format!("FixedEigenvalues({s:?})") });
                }
                let (hi, lo, p) = (s[0], s[n - 1], level);
                let comps = self
                    .a
                    .iter()
                    .map(|a| {
                        let a = linalg::sym(a);
                        let m = &a * (hi - lo) + Mat::identity(n, n) * (lo * a.trace() / p as f64);
                        if p == 1 {
                            Component::SphereQuadratic { matrix: m }
                        } else {
                            Component::StiefelGram { matrix: m }
                        }
                    })
                    .collect();
                let spec = if p == 1 { ManifoldSpec::Sphere { n } } else { ManifoldSpec::Stiefel { n, m: p } };
                let map = move |x: &Mat| x * x.transpose() * (hi - lo) + Mat::identity(n, n) * lo;
                Ok((ObjectiveFamily::new(spec, comps)?, Box::new(map)))
            }
            SpectralMode::Singular => {
                if s.iter().any(|&v| v != s[0]) || s[0] <= 0.0 {
                    return Err(Error::UnsupportedManifold { op: "gradient reformulation".into(), manifold: format!("FixedSingularValues({s:?})") });
                }
                let (n, m) = self.a[0].shape();
                let sc = s[0];
                let comps = self.a.iter().map(|a| Component::LinearTrace { matrix: a * sc }).collect();
                let map = move |x: &Mat| x * sc;
                Ok((ObjectiveFamily::new(ManifoldSpec::Stiefel { n, m }, comps)?, Box::new(map)))
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct TightnessOptions {
    pub tol: f64,
    pub starts: usize,
    pub seed: u64,
    pub dual: DualOptions,
}

impl Default for TightnessOptions {
    fn default() -> Self {
        Self { tol: 1e-4, starts: 16, seed: 0, dual: DualOptions::default() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TightnessReport {
    pub noncrossing: NoncrossingCertificate,
    pub min_gap: f64,
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
    pub tight: bool,
    pub verdict: String,
}

/// Runs the noncrossing certificate, the ellipsoid dual and a multistart
/// feasible primal, and reports whether the relaxation is numerically tight.
pub fn tightness_report(instance: &SpectralInstance, opts: &TightnessOptions) -> Result<TightnessReport> {
    instance.validate()?;
    let level = level_from_spectrum(&instance.spectrum);
    let full_rank = instance.mode == SpectralMode::Singular && instance.spectrum.last().is_some_and(|&v| v > 0.0);
    let noncrossing = if instance.a.len() == 1 && level == 0 {
        NoncrossingCertificate { level, min_gap: f64::INFINITY, witness: vec![1.0], verdict: Verdict::CertifiedHeuristic, full_rank_min_sv: None }
    } else {
        let lvl = if instance.mode == SpectralMode::Eigen { level.max(1) } else { level };
        min_gap_on_span_with(&instance.a, lvl, instance.mode, full_rank, DEFAULT_BUDGET, opts.seed)?
    };
    let section = instance.section()?;
    let (primal, dual) = if instance.a.len() == 1 {
        let v = section.maximize(&[1.0])?.lagrangian_value;
        (v, v)
    } else {
        let d = dual_ellipsoid::solve(section.as_ref(), &instance.rhs, &opts.dual)?;
        let (fam, _) = instance.gradient_family()?;
        let p = oracle::constrained_max(&fam, &instance.rhs, opts.starts, opts.seed)?;
        (p.best_value, d.dual_value)
    };
    let gap = dual - primal;
    let tight = gap.abs() <= opts.tol;
    let certified = noncrossing.verdict == Verdict::CertifiedHeuristic;
    let verdict = match (certified, tight) {
        (true, true) => "tight; noncrossing hypothesis holds (heuristic certificate)",
        (true, false) => "gap observed although the noncrossing hypothesis holds; check solver tolerances",
        (false, true) => "tight; the sufficient noncrossing condition failed, so tightness is not explained by it",
        (false, false) => "gap observed; the sufficient noncrossing condition failed",
    };
    Ok(TightnessReport { min_gap: noncrossing.min_gap, noncrossing, primal, dual, gap, tight, verdict: verdict.into() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_inference() {
        assert_eq!(level_from_spectrum(&[1.0, 0.0, 0.0, 0.0]), 1);
        assert_eq!(level_from_spectrum(&[2.0, 1.0, 0.0]), 2);
        assert_eq!(level_from_spectrum(&[1.0, 1.0]), 0);
        assert_eq!(level_from_spectrum(&[3.0, 3.0, 1.0]), 2);
    }

    #[test]
    fn two_by_two_example() {
        let a0 = linalg::diag(&[1.0, 2.0]);
        let a1 = Mat::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let c = min_gap_on_span(&[a0, a1], 1, SpectralMode::Eigen, DEFAULT_BUDGET, 0).unwrap();
        assert!((c.min_gap - 1.0).abs() < 1e-6, "{}", c.min_gap);
        assert_eq!(c.verdict, Verdict::CertifiedHeuristic);
        let wn: f64 = c.witness.iter().map(|x| x * x).sum();
        assert!((wn - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identity_in_span_crosses() {
        let mut r = linalg::rng(0);
        let c = min_gap_on_span(&[Mat::identity(3, 3), linalg::gaussian_sym(3, &mut r)], 1, SpectralMode::Eigen, 8, 0).unwrap();
        assert_eq!(c.verdict, Verdict::CrossingFound);
        assert!(c.min_gap <= GAP_TOL);
    }

    #[test]
    fn dependent_span_rejected() {
        let a = linalg::diag(&[1.0, 2.0]);
        let r = min_gap_on_span(&[a.clone(), a * 2.0], 1, SpectralMode::Eigen, 4, 0);
        assert!(matches!(r, Err(Error::DegenerateSpan { .. })));
    }

    #[test]
    fn membership_examples() {
        let l = [2.0, 1.0, 0.0];
        let m = orbitope_membership(&l, &l, SpectralMode::Eigen).unwrap();
        assert!(m.inside && m.margin.abs() < 1e-15);
        assert!(orbitope_membership(&[1.0, 1.0, 1.0], &l, SpectralMode::Eigen).unwrap().inside);
        assert!(!orbitope_membership(&[3.0, 0.0, 0.0], &l, SpectralMode::Eigen).unwrap().inside);
        assert!(orbitope_membership(&[-1.5, 0.2], &[2.0, 1.0], SpectralMode::Singular).unwrap().inside);
        assert!(!orbitope_membership(&[-1.5, 1.6], &[2.0, 1.0], SpectralMode::Singular).unwrap().inside);
    }

    #[test]
    fn singular_full_rank_detects_rank_drop() {
        // span{E11, E22} contains E11 of rank 1
        let mut e11 = Mat::zeros(3, 2);
        e11[(0, 0)] = 1.0;
        let mut e22 = Mat::zeros(3, 2);
        e22[(1, 1)] = 1.0;
        let c = min_gap_on_span_with(&[e11, e22], 0, SpectralMode::Singular, true, 8, 0).unwrap();
        assert_eq!(c.verdict, Verdict::CrossingFound);
        assert!(c.full_rank_min_sv.unwrap() < 1e-8);
    }

    #[test]
    fn diagonal_qcqp_report() {
        let inst = SpectralInstance {
            mode: SpectralMode::Eigen,
            a: vec![linalg::diag(&[3.0, 1.0, 0.0]), linalg::diag(&[1.0, 2.0, 3.0])],
            spectrum: vec![1.0, 0.0, 0.0],
            rhs: vec![2.0],
        };
        let r = tightness_report(&inst, &TightnessOptions::default()).unwrap();
        assert!((r.primal - 1.5).abs() < 1e-4, "primal {}", r.primal);
        assert!((r.dual - 1.5).abs() < 1e-4, "dual {}", r.dual);
        assert!(r.tight);
    }

    #[test]
    fn unconstrained_report() {
        let inst = SpectralInstance { mode: SpectralMode::Eigen, a: vec![linalg::diag(&[3.0, 1.0, 0.0])], spectrum: vec![1.0, 0.0, 0.0], rhs: vec![] };
        let r = tightness_report(&inst, &TightnessOptions::default()).unwrap();
        assert_eq!(r.primal, 3.0);
        assert_eq!(r.dual, 3.0);
    }
}
