//! Closed-form and semi-closed-form Lagrangian dual sections `D(t)`.
//!
//! Every public section function returns the maximizer of `⟨t, f⟩` over
//! the manifold together with a uniqueness gap: the smallest spectral gap
//! that separates the maximizer from competitors (0 means possibly not unique).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lagrangian::{Component, MultiplierVector, ObjectiveFamily};
use crate::linalg::{self, Mat, Vector};
use crate::manifolds::{ManifoldPoint, ManifoldSpec};
use crate::oracle;
use crate::procrustes;

const SECULAR_MAX_STEPS: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LiftStatus {
    Unique,
    /// Equal singular values of `BᵀZ`; the lift is still unique when they are nonzero.
    EqualSingularValues,
    /// `BᵀZ` is rank deficient and the lift is not unique.
    RankDeficient,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SectionResult {
    pub point: ManifoldPoint,
    pub lagrangian_value: f64,
    pub uniqueness_gap: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lift_status: Option<LiftStatus>,
}

fn weighted_sum(mats: &[Mat], t: &[f64]) -> Result<Mat> {
    if mats.len() != t.len() {
        return Err(Error::ShapeMismatch(format!("{} matrices but {} multipliers", mats.len(), t.len())));
    }
    let shape = mats[0].shape();
    let mut s = Mat::zeros(shape.0, shape.1);
    for (a, &ti) in mats.iter().zip(t) {
        if a.shape() != shape {
            return Err(Error::ShapeMismatch("matrices in the family differ in shape".into()));
        }
        s += a * ti;
    }
    Ok(s)
}

fn finite_min(gaps: impl Iterator<Item = f64>) -> f64 {
    gaps.fold(f64::INFINITY, f64::min)
}

pub(crate) fn liep_raw(a: &[Mat], lambda: &[f64], t: &[f64]) -> Result<SectionResult> {
    let n = lambda.len();
    if a.iter().any(|m| m.shape() != (n, n)) {
        return Err(Error::ShapeMismatch(format!("expected {n}x{n} symmetric matrices")));
    }
    let s = linalg::sym(&weighted_sum(a, t)?);
    let (mu, v) = linalg::sym_eig(&s);
    let x = &v * linalg::diag(lambda) * v.transpose();
    let x = linalg::sym(&x);
    let gap = finite_min((0..n.saturating_sub(1)).filter(|&i| lambda[i] > lambda[i + 1]).map(|i| mu[i] - mu[i + 1]));
    let value = (0..n).map(|i| mu[i] * lambda[i]).sum();
    Ok(SectionResult {
        point: ManifoldPoint::new_unchecked(ManifoldSpec::FixedEigenvalues { lambda: lambda.to_vec() }, x),
        lagrangian_value: value,
        uniqueness_gap: gap.max(0.0),
        lift_status: None,
    })
}

/// Section of `X ↦ (⟨A_i, X⟩)` over matrices with spectrum `λ`: eigenvectors
/// of `Σ tᵢAᵢ` carrying `λ` in matching order.
pub fn liep_section(a: &[Mat], lambda: &[f64], t: &MultiplierVector) -> Result<SectionResult> {
    ManifoldSpec::FixedEigenvalues { lambda: lambda.to_vec() }.validate()?;
    liep_raw(a, lambda, &t.t)
}

pub(crate) fn lisv_raw(a: &[Mat], sigma: &[f64], t: &[f64]) -> Result<SectionResult> {
    let m = sigma.len();
    let (n, mm) = a[0].shape();
    if mm != m || n < m {
        return Err(Error::ShapeMismatch(format!("expected n x {m} matrices with n >= {m}")));
    }
    let s = weighted_sum(a, t)?;
    let (u, mu, v) = linalg::svd(&s);
    let x = &u * linalg::diag(sigma) * v.transpose();
    let mut gap = finite_min((0..m - 1).filter(|&i| sigma[i] > sigma[i + 1]).map(|i| mu[i] - mu[i + 1]));
    if sigma[m - 1] > 0.0 {
        gap = gap.min(mu[m - 1]);
    }
    let value = (0..m).map(|i| mu[i] * sigma[i]).sum();
    Ok(SectionResult {
        point: ManifoldPoint::new_unchecked(ManifoldSpec::FixedSingularValues { n, m, sigma: sigma.to_vec() }, x),
        lagrangian_value: value,
        uniqueness_gap: gap.max(0.0),
        lift_status: None,
    })
}

/// Section of `X ↦ (⟨A_i, X⟩)` over n×m matrices with singular values `σ`.
pub fn lisv_section(a: &[Mat], sigma: &[f64], t: &MultiplierVector) -> Result<SectionResult> {
    let (n, m) = a.first().map(|x| x.shape()).unwrap_or((0, 0));
    ManifoldSpec::FixedSingularValues { n, m, sigma: sigma.to_vec() }.validate()?;
    lisv_raw(a, sigma, &t.t)
}

/// Global maximizer of `xᵀQx + gᵀx` over the unit sphere and the gap
/// `λ − q₁` of the optimality multiplier (0 in the hard case).
pub fn trs_max(q: &Mat, g: &Vector) -> Result<(Vector, f64)> {
    let n = q.nrows();
    let (qv, v) = linalg::sym_eig(q);
    let q1 = qv[0];
    let gamma: Vector = v.transpose() * g * 0.5;
    let gnorm = gamma.norm();
    let scale = 1.0 + q1.abs();
    if gnorm <= 1e-300 {
        let gap = if n > 1 { qv[0] - qv[1] } else { f64::INFINITY };
        return Ok((v.column(0).into_owned(), gap));
    }
    let psi = |lam: f64| -> f64 { (0..n).map(|i| (gamma[i] / (lam - qv[i])).powi(2)).sum() };
    let mut lo = q1 + 1e-12 * scale;
    let mut hi = q1 + gnorm;
    if hi <= lo {
        hi = lo + gnorm.max(1e-12 * scale);
    }
    if psi(lo) <= 1.0 {
        // Hard case: the component of g on the top eigenspace (numerically) vanishes.
        let top = (0..n).filter(|&i| qv[i] >= q1 - 1e-12 * scale).count();
        let mut x = Vector::zeros(n);
        for i in top..n {
            x += v.column(i) * (gamma[i] / (q1 - qv[i]));
        }
        let nx = x.norm();
        if nx < 1.0 {
            x += v.column(0) * (1.0 - nx * nx).sqrt();
        } else {
            x /= nx;
        }
        return Ok((x, 0.0));
    }
    let mut steps = 0;
    while hi - lo > 1e-13 * (1.0 + hi.abs()) {
        let mid = 0.5 * (lo + hi);
        if psi(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        steps += 1;
        if steps > SECULAR_MAX_STEPS {
            return Err(Error::Numerical { message: "secular bisection did not converge".into(), residual: psi(mid) - 1.0 });
        }
    }
    // Newton on 1/√ψ − 1, which is nearly linear in λ.
    let mut lam = 0.5 * (lo + hi);
    for _ in 0..8 {
        let p = psi(lam);
        let dp: f64 = (0..n).map(|i| -2.0 * gamma[i].powi(2) / (lam - qv[i]).powi(3)).sum();
        let phi = 1.0 / p.sqrt() - 1.0;
        let dphi = -0.5 * dp / p.powf(1.5);
        if dphi == 0.0 {
            break;
        }
        let next = lam - phi / dphi;
        if !(next > q1) || !next.is_finite() {
            break;
        }
        lam = next;
        steps += 1;
        if phi.abs() < 1e-16 {
            break;
        }
    }
    let residual = (psi(lam) - 1.0).abs();
    if residual > 1e-8 || steps > SECULAR_MAX_STEPS {
        return Err(Error::Numerical { message: "secular equation root not found".into(), residual });
    }
    let mut x = Vector::zeros(n);
    for i in 0..n {
        x += v.column(i) * (gamma[i] / (lam - qv[i]));
    }
    let nx = x.norm();
    Ok((x / nx, lam - q1))
}

pub(crate) fn trs_raw(a: &Mat, b: &Vector, t: &[f64]) -> Result<SectionResult> {
    let n = a.nrows();
    if t.len() != 2 || b.len() != n || a.ncols() != n {
        return Err(Error::ShapeMismatch("trust-region section needs t in R^2, A n x n and b in R^n".into()));
    }
    let q = linalg::sym(a) * t[1];
    let g = b * t[0];
    let (x, gap) = trs_max(&q, &g)?;
    let value = t[0] * b.dot(&x) + t[1] * x.dot(&(a * &x));
    Ok(SectionResult {
        point: ManifoldPoint::new_unchecked(ManifoldSpec::Sphere { n }, Mat::from_column_slice(n, 1, x.as_slice())),
        lagrangian_value: value,
        uniqueness_gap: gap.max(0.0),
        lift_status: None,
    })
}

/// Maximizer of `t₀⟨b, x⟩ + t₁xᵀAx` over the unit sphere.
pub fn sphere_trust_region_section(a: &Mat, b: &Vector, t: &MultiplierVector) -> Result<SectionResult> {
    trs_raw(a, b, &t.t)
}

/// Lift a rank-m projector to the Stiefel point with `XXᵀ = Z` maximizing `⟨B, X⟩`.
pub fn lift_to_stiefel(b: &Mat, z: &Mat) -> Result<(ManifoldPoint, LiftStatus)> {
    let (n, m) = b.shape();
    if z.shape() != (n, n) {
        return Err(Error::ShapeMismatch(format!("projector must be {n}x{n}")));
    }
    let x0 = linalg::top_eigvecs(&linalg::sym(z), m);
    let mm = x0.transpose() * b;
    let (p, s, q) = linalg::svd(&mm);
    let x = &x0 * (p * q.transpose());
    let smax = s[0].max(1.0);
    let status = if s[m - 1] <= 1e-12 * smax {
        LiftStatus::RankDeficient
    } else if (1..m).any(|i| (s[i - 1] - s[i]).abs() <= 1e-12 * smax) {
        LiftStatus::EqualSingularValues
    } else {
        LiftStatus::Unique
    };
    Ok((ManifoldPoint::new_unchecked(ManifoldSpec::Stiefel { n, m }, x), status))
}

/// Objective over the unit vector `z` spanning the complement of `Z = XXᵀ`
/// in the canonical basis: `t₀√s(z) − t₁zᵀAz`, constant `t₁ Tr A` dropped.
fn upp_reduced_value(a: &Mat, s1: f64, s2: f64, t0: f64, t1: f64, z: &Vector) -> f64 {
    t0 * upp_s(s1, s2, z).sqrt() - t1 * z.dot(&(a * z))
}

fn upp_s(s1: f64, s2: f64, z: &Vector) -> f64 {
    let v = s1 * s1 + s2 * s2 - s1 * s1 * z[0] * z[0] - s2 * s2 * z[1] * z[1] + 2.0 * s1 * s2 * z[2].abs();
    v.max(0.0)
}

/// Maximizer over z ∈ S² of `zᵀQz + c|z₃|` for `Q = −α BBᵀ − t₁A`: the
/// absolute value is removed by the symmetry z ↦ −z, and the `z₃ = 0` branch
/// is compared explicitly.
fn upp_inner(a: &Mat, s1: f64, s2: f64, t1: f64, alpha: f64) -> Result<(Vector, f64)> {
    let bbt = linalg::diag(&[s1 * s1, s2 * s2, 0.0]);
    let q = -(bbt * alpha) - a * t1;
    let c = 2.0 * alpha * s1 * s2;
    let g = Vector::from_vec(vec![0.0, 0.0, c]);
    let (z, gap) = trs_max(&q, &g)?;
    let obj = |z: &Vector| z.dot(&(&q * z)) + c * z[2].abs();
    let q2 = q.view((0, 0), (2, 2)).into_owned();
    let (_, v2) = linalg::sym_eig(&q2);
    let zb = Vector::from_vec(vec![v2[(0, 0)], v2[(1, 0)], 0.0]);
    if obj(&zb) > obj(&z) + 1e-14 * (1.0 + obj(&z).abs()) {
        Ok((zb, 0.0))
    } else {
        Ok((z, gap))
    }
}

/// Canonical-basis solve: `B = [[σ₁,0],[0,σ₂],[0,0]]`, `t₀ ≥ 0`.
fn upp32_canonical(a: &Mat, s1: f64, s2: f64, t0: f64, t1: f64) -> Result<(Vector, f64)> {
    if t0 == 0.0 {
        return trs_max(&(a * -t1), &Vector::zeros(3));
    }
    if t1 == 0.0 || s1 + s2 == 0.0 {
        if s1 + s2 == 0.0 {
            return trs_max(&(a * -t1), &Vector::zeros(3));
        }
        return Ok((Vector::from_vec(vec![0.0, 0.0, 1.0]), f64::INFINITY));
    }
    let g_of = |alpha: f64| -> Result<(f64, Vector, f64)> {
        let (z, gap) = upp_inner(a, s1, s2, t1, alpha)?;
        Ok((2.0 * alpha * upp_s(s1, s2, &z).sqrt(), z, gap))
    };
    // 2α√s ≤ 2α(σ₁+σ₂), so the root lies above t₀ / (2(σ₁+σ₂)).
    let mut lo = t0 / (2.0 * (s1 + s2));
    let mut hi = 2.0 * lo;
    let mut g_hi = g_of(hi)?;
    let mut doublings = 0;
    while g_hi.0 < t0 {
        lo = hi;
        hi *= 2.0;
        g_hi = g_of(hi)?;
        doublings += 1;
        if doublings > 200 {
            return Err(Error::Numerical { message: "could not bracket the scalar multiplier".into(), residual: g_hi.0 - t0 });
        }
    }
    let mut g_lo = g_of(lo)?;
    for _ in 0..200 {
        if hi - lo <= 1e-15 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let gm = g_of(mid)?;
        if gm.0 < t0 {
            lo = mid;
            g_lo = gm;
        } else {
            hi = mid;
            g_hi = gm;
        }
    }
    let v_lo = upp_reduced_value(a, s1, s2, t0, t1, &g_lo.1);
    let v_hi = upp_reduced_value(a, s1, s2, t0, t1, &g_hi.1);
    let jump = (&g_lo.1 - &g_hi.1).norm().min((&g_lo.1 + &g_hi.1).norm());
    let gap = if jump > 1e-6 { 0.0 } else { g_lo.2.min(g_hi.2) };
    Ok(if v_lo >= v_hi { (g_lo.1, gap) } else { (g_hi.1, gap) })
}

pub(crate) fn upp32_raw(a: &Mat, b: &Mat, t: &[f64]) -> Result<SectionResult> {
    if a.shape() != (3, 3) || b.shape() != (3, 2) || t.len() != 2 {
        return Err(Error::ShapeMismatch("the (3,2) section needs A 3x3, B 3x2 and t in R^2".into()));
    }
    if t[0] < 0.0 {
        let mut r = upp32_raw(a, b, &[-t[0], t[1]])?;
        r.point.value = -r.point.value;
        r.lagrangian_value = t[0] * b.dot(&r.point.value) + t[1] * (a.dot(&(&r.point.value * r.point.value.transpose())));
        return Ok(r);
    }
    let basis = procrustes::canonical_basis(b);
    let ac = linalg::sym(&(basis.p.transpose() * a * &basis.p));
    let (z, gap) = upp32_canonical(&ac, basis.sigma[0], basis.sigma[1], t[0], t[1])?;
    let zc = Mat::from_column_slice(3, 1, z.as_slice());
    let zproj = Mat::identity(3, 3) - &zc * zc.transpose();
    let bc = linalg::diag(&[basis.sigma[0], basis.sigma[1], 0.0]).columns(0, 2).into_owned();
    let (xc, status) = lift_to_stiefel(&bc, &zproj)?;
    let x = &basis.p * xc.value * basis.v.transpose();
    let value = t[0] * b.dot(&x) + t[1] * a.dot(&(&x * x.transpose()));
    Ok(SectionResult {
        point: ManifoldPoint::new_unchecked(ManifoldSpec::Stiefel { n: 3, m: 2 }, x),
        lagrangian_value: value,
        uniqueness_gap: gap.max(0.0),
        lift_status: Some(status),
    })
}

/// Maximizer of `t₀⟨B, X⟩ + t₁⟨A, XXᵀ⟩` over Stiefel(3, 2).
///
/// The projector `Z = XXᵀ = I − zzᵀ` is optimized through its unit normal
/// `z`, using `max_{XXᵀ=Z} ⟨B,X⟩ = √s(z)`. A scalar multiplier α linearizes
/// the square root: for each α a trust-region problem gives `z(α)`, and
/// bisection on α enforces `2α√s(z(α)) = t₀`, which certifies the global
/// maximum. Any B is accepted; the solve runs in its singular basis.
pub fn upp32_section(a: &Mat, b: &Mat, t: &MultiplierVector) -> Result<SectionResult> {
    upp32_raw(a, b, &t.t)
}

/// Top-p eigenvector section of `Σ tᵢ⟨X, AᵢX⟩` on Sphere(n) (p = 1) or
/// Stiefel(n, p).
pub(crate) fn gram_raw(family: &ObjectiveFamily, mats: &[Mat], t: &[f64]) -> Result<SectionResult> {
    let s = linalg::sym(&weighted_sum(mats, t)?);
    let (mu, v) = linalg::sym_eig(&s);
    let (n, p) = family.spec.ambient_shape();
    let x = v.columns(0, p).into_owned();
    let gap = if p < n { mu[p - 1] - mu[p] } else { f64::INFINITY };
    let value = family.lagrangian_raw(t, &x)?;
    Ok(SectionResult {
        point: ManifoldPoint::new_unchecked(family.spec.clone(), x),
        lagrangian_value: value,
        uniqueness_gap: gap.max(0.0),
        lift_status: None,
    })
}

/// A dual section: the maximizer of `⟨t, f⟩` for every nonzero t. Negative
/// `t₀` is allowed and handled by reflecting component 0.
pub trait Section: Send + Sync {
    fn family(&self) -> &ObjectiveFamily;
    fn maximize(&self, t: &[f64]) -> Result<SectionResult>;

    fn maximize_checked(&self, t: &MultiplierVector) -> Result<SectionResult> {
        self.maximize(&t.t)
    }
}

pub struct LiepSection {
    family: ObjectiveFamily,
    a: Vec<Mat>,
    lambda: Vec<f64>,
}

impl LiepSection {
    pub fn new(a: Vec<Mat>, lambda: Vec<f64>) -> Result<Self> {
        let spec = ManifoldSpec::FixedEigenvalues { lambda: lambda.clone() };
        let a: Vec<Mat> = a.iter().map(linalg::sym).collect();
        let comps = a.iter().map(|m| Component::LinearTrace { matrix: m.clone() }).collect();
        Ok(Self { family: ObjectiveFamily::new(spec, comps)?, a, lambda })
    }
}

impl Section for LiepSection {
    fn family(&self) -> &ObjectiveFamily {
        &self.family
    }
    fn maximize(&self, t: &[f64]) -> Result<SectionResult> {
        liep_raw(&self.a, &self.lambda, t)
    }
}

pub struct LisvSection {
    family: ObjectiveFamily,
    a: Vec<Mat>,
    sigma: Vec<f64>,
}

impl LisvSection {
    pub fn new(a: Vec<Mat>, sigma: Vec<f64>) -> Result<Self> {
        let (n, m) = a.first().map(|x| x.shape()).unwrap_or((0, 0));
        let spec = ManifoldSpec::FixedSingularValues { n, m, sigma: sigma.clone() };
        let comps = a.iter().map(|m| Component::LinearTrace { matrix: m.clone() }).collect();
        Ok(Self { family: ObjectiveFamily::new(spec, comps)?, a, sigma })
    }
}

impl Section for LisvSection {
    fn family(&self) -> &ObjectiveFamily {
        &self.family
    }
    fn maximize(&self, t: &[f64]) -> Result<SectionResult> {
        lisv_raw(&self.a, &self.sigma, t)
    }
}

pub struct TrustRegionSection {
    family: ObjectiveFamily,
    a: Mat,
    b: Vector,
}

impl TrustRegionSection {
    pub fn new(a: Mat, b: Vector) -> Result<Self> {
        let n = b.len();
        let a = linalg::sym(&a);
        let family = ObjectiveFamily::new(
            ManifoldSpec::Sphere { n },
            vec![
                Component::SphereLinear { matrix: Mat::from_column_slice(n, 1, b.as_slice()) },
                Component::SphereQuadratic { matrix: a.clone() },
            ],
        )?;
        Ok(Self { family, a, b })
    }
}

impl Section for TrustRegionSection {
    fn family(&self) -> &ObjectiveFamily {
        &self.family
    }
    fn maximize(&self, t: &[f64]) -> Result<SectionResult> {
        trs_raw(&self.a, &self.b, t)
    }
}

pub struct Upp32Section {
    family: ObjectiveFamily,
    a: Mat,
    b: Mat,
}

impl Upp32Section {
    pub fn new(a: Mat, b: Mat) -> Result<Self> {
        let a = linalg::sym(&a);
        let family = procrustes::upp_family(&a, &b)?;
        if family.spec != (ManifoldSpec::Stiefel { n: 3, m: 2 }) {
            return Err(Error::ShapeMismatch("closed-form UPP section needs n = 3, m = 2".into()));
        }
        Ok(Self { family, a, b })
    }
}

impl Section for Upp32Section {
    fn family(&self) -> &ObjectiveFamily {
        &self.family
    }
    fn maximize(&self, t: &[f64]) -> Result<SectionResult> {
        upp32_raw(&self.a, &self.b, t)
    }
}

/// Section for families whose components are all quadratic forms
/// `⟨X, AᵢX⟩` on a sphere or Stiefel manifold: the top eigenvectors of `Σ tᵢAᵢ`.
pub struct GramSection {
    family: ObjectiveFamily,
    mats: Vec<Mat>,
}

impl GramSection {
    pub fn new(family: ObjectiveFamily) -> Result<Self> {
        if !matches!(family.spec, ManifoldSpec::Sphere { .. } | ManifoldSpec::Stiefel { .. }) {
            return Err(Error::UnsupportedManifold { op: "quadratic-form section".into(), manifold: family.spec.name() });
        }
        let mats = family
            .components
            .iter()
            .map(|c| match c {
                Component::SphereQuadratic { matrix } | Component::StiefelGram { matrix } => Ok(linalg::sym(matrix)),
                other => Err(Error::Precondition(format!("component {} is not a quadratic form", other.kind()))),
            })
            .collect::<Result<_>>()?;
        Ok(Self { family, mats })
    }
}

impl Section for GramSection {
    fn family(&self) -> &ObjectiveFamily {
        &self.family
    }
    fn maximize(&self, t: &[f64]) -> Result<SectionResult> {
        gram_raw(&self.family, &self.mats, t)
    }
}

/// Fallback section backed by the multistart oracle; valid only where the
/// maximizer is found reliably.
pub struct OracleSection {
    family: ObjectiveFamily,
    pub starts: usize,
    pub seed: u64,
}

impl OracleSection {
    pub fn new(family: ObjectiveFamily, starts: usize, seed: u64) -> Result<Self> {
        if !family.spec.supports_tangent() {
            return Err(Error::UnsupportedManifold { op: "multistart section".into(), manifold: family.spec.name() });
        }
        Ok(Self { family, starts, seed })
    }
}

impl Section for OracleSection {
    fn family(&self) -> &ObjectiveFamily {
        &self.family
    }
    fn maximize(&self, t: &[f64]) -> Result<SectionResult> {
        let rep = oracle::multistart_max_raw(&self.family, t, self.starts, self.seed)?;
        let gap = if rep.cluster_count <= 1 { f64::INFINITY } else { rep.second_gap };
        Ok(SectionResult {
            point: rep.best_point,
            lagrangian_value: rep.best_value,
            uniqueness_gap: gap,
            lift_status: None,
        })
    }
}

/// The most specific section available for `family`: closed forms for
/// spectral, trust-region, quadratic-form and (3,2) Procrustes families, the
/// multistart oracle otherwise.
pub fn section_for(family: &ObjectiveFamily, starts: usize, seed: u64) -> Result<Box<dyn Section>> {
    let mats = || family.components.iter().map(|c| component_matrix(c).cloned()).collect::<Option<Vec<Mat>>>();
    let comps = &family.components;
    match &family.spec {
        ManifoldSpec::FixedEigenvalues { lambda } => {
            let a = linear_mats(family)?;
            Ok(Box::new(LiepSection::new(a, lambda.clone())?))
        }
        ManifoldSpec::FixedSingularValues { sigma, .. } => {
            let a = linear_mats(family)?;
            Ok(Box::new(LisvSection::new(a, sigma.clone())?))
        }
        ManifoldSpec::Sphere { n } => match comps.as_slice() {
            [Component::SphereLinear { matrix: b }, Component::SphereQuadratic { matrix: a }] => {
                Ok(Box::new(TrustRegionSection::new(a.clone(), Vector::from_column_slice(&b.as_slice()[..*n]))?))
            }
            _ if comps.iter().all(is_quadratic) => Ok(Box::new(GramSection::new(family.clone())?)),
            _ => Ok(Box::new(OracleSection::new(family.clone(), starts, seed)?)),
        },
        // Stiefel(n, m) is the set of n×m matrices with all singular values 1.
        ManifoldSpec::Stiefel { m, .. } if comps.iter().all(|c| matches!(c, Component::LinearTrace { .. })) => {
            Ok(Box::new(LisvSection::new(linear_mats(family)?, vec![1.0; *m])?))
        }
        ManifoldSpec::Stiefel { n: 3, m: 2 } => match (comps.as_slice(), mats()) {
            ([Component::LinearTrace { .. }, Component::StiefelGram { .. }], Some(m)) => Ok(Box::new(Upp32Section::new(m[1].clone(), m[0].clone())?)),
            _ if comps.iter().all(is_quadratic) => Ok(Box::new(GramSection::new(family.clone())?)),
            _ => Ok(Box::new(OracleSection::new(family.clone(), starts, seed)?)),
        },
        ManifoldSpec::Stiefel { .. } if comps.iter().all(is_quadratic) => Ok(Box::new(GramSection::new(family.clone())?)),
        _ => Ok(Box::new(OracleSection::new(family.clone(), starts, seed)?)),
    }
}

fn component_matrix(c: &Component) -> Option<&Mat> {
    match c {
        Component::LinearTrace { matrix }
        | Component::SphereQuadratic { matrix }
        | Component::SphereLinear { matrix }
        | Component::StiefelGram { matrix } => Some(matrix),
        Component::SqrtWrapped { .. } => None,
    }
}

fn is_quadratic(c: &Component) -> bool {
    matches!(c, Component::SphereQuadratic { .. } | Component::StiefelGram { .. })
}

fn linear_mats(family: &ObjectiveFamily) -> Result<Vec<Mat>> {
    family
        .components
        .iter()
        .map(|c| match c {
            Component::LinearTrace { matrix } => Ok(matrix.clone()),
            other => Err(Error::Precondition(format!("spectral sections need linear_trace components, got {}", other.kind()))),
        })
        .collect()
}
