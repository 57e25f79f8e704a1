//! Unbalanced orthogonal Procrustes: `min ‖UᵀX − Wᵀ‖²` over Stiefel(n, m),
//! rewritten as maximizing `⟨B, X⟩ + ⟨A, XXᵀ⟩`.

use serde::{Deserialize, Serialize};

use crate::chord::{self, ChordConfig};
use crate::error::{Error, Result};
use crate::lagrangian::{Component, ObjectiveFamily};
use crate::linalg::{self, Mat, Vector};
use crate::manifolds::{ManifoldSpec, Retraction};
use crate::oracle;
use crate::sections::{self, Section, Upp32Section};
use crate::spectral::{self, SpectralMode, Verdict};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UppInstance {
    /// n×d
    #[serde(rename = "U", with = "crate::io::rowmajor")]
    pub u: Mat,
    /// m×d
    #[serde(rename = "W", with = "crate::io::rowmajor")]
    pub w: Mat,
}

impl UppInstance {
    pub fn new(u: Mat, w: Mat) -> Result<Self> {
        let inst = Self { u, w };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        let (n, d) = self.u.shape();
        let (m, d2) = self.w.shape();
        if d != d2 {
            return Err(Error::ShapeMismatch(format!("U has {d} columns but W has {d2}")));
        }
        if !(n > m && m >= 1) {
            return Err(Error::ShapeMismatch(format!("need n > m >= 1, got n = {n}, m = {m}")));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.u.nrows()
    }

    pub fn m(&self) -> usize {
        self.w.nrows()
    }

    /// `‖UᵀX − Wᵀ‖²`
    pub fn objective(&self, x: &Mat) -> f64 {
        (self.u.transpose() * x - self.w.transpose()).norm_squared()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformedUpp {
    #[serde(with = "crate::io::rowmajor")]
    pub a: Mat,
    #[serde(with = "crate::io::rowmajor")]
    pub b: Mat,
    /// `‖W‖²`; the original objective equals `offset − (⟨A,XXᵀ⟩ + ⟨B,X⟩)`.
    pub offset: f64,
}

pub fn transform(inst: &UppInstance) -> TransformedUpp {
    TransformedUpp {
        a: -(&inst.u * inst.u.transpose()),
        b: &inst.u * inst.w.transpose() * 2.0,
        offset: inst.w.norm_squared(),
    }
}

/// The family `(⟨B, X⟩, ⟨A, XXᵀ⟩)` on Stiefel(n, m).
pub fn upp_family(a: &Mat, b: &Mat) -> Result<ObjectiveFamily> {
    let (n, m) = b.shape();
    ObjectiveFamily::new(
        ManifoldSpec::Stiefel { n, m },
        vec![
            Component::LinearTrace { matrix: b.clone() },
            Component::StiefelGram { matrix: linalg::sym(a) },
        ],
    )
}

/// Orthogonal bases with `Pᵀ B V = [diag(σ); 0]`.
#[derive(Clone, Debug)]
pub struct CanonicalBasis {
    pub p: Mat,
    pub v: Mat,
    pub sigma: Vec<f64>,
}

pub fn canonical_basis(b: &Mat) -> CanonicalBasis {
    let (n, m) = b.shape();
    let (u, s, v) = linalg::svd(b);
    let p = if n > m {
        let c = linalg::complement_basis(&u);
        let mut p = Mat::zeros(n, n);
        p.columns_mut(0, m).copy_from(&u);
        p.columns_mut(m, n - m).copy_from(&c);
        p
    } else {
        u
    };
    CanonicalBasis { p, v, sigma: s.iter().copied().collect() }
}

#[derive(Clone, Debug)]
pub struct Canonical {
    pub a: Mat,
    pub b: Mat,
    pub basis: CanonicalBasis,
}

impl Canonical {
    /// Maps a canonical-basis point back: `X = P X′ Vᵀ`.
    pub fn to_original(&self, x: &Mat) -> Mat {
        &self.basis.p * x * self.basis.v.transpose()
    }

    pub fn to_canonical(&self, x: &Mat) -> Mat {
        self.basis.p.transpose() * x * &self.basis.v
    }
}

/// Rotates `(A, B)` so that B is `[diag(σ); 0]` with σ strictly decreasing.
pub fn canonicalize(a: &Mat, b: &Mat) -> Result<Canonical> {
    let basis = canonical_basis(b);
    let s = &basis.sigma;
    for i in 1..s.len() {
        if s[i - 1] - s[i] <= 1e-10 * s[0].max(1.0) {
            return Err(Error::DegenerateB { sigma1: s[i - 1], sigma2: s[i] });
        }
    }
    let (n, m) = b.shape();
    let mut bc = Mat::zeros(n, m);
    for (i, &si) in s.iter().enumerate() {
        bc[(i, i)] = si;
    }
    let ac = linalg::sym(&(basis.p.transpose() * a * &basis.p));
    Ok(Canonical { a: ac, b: bc, basis })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WellPositionedCertificate {
    pub w: Vec<f64>,
    pub z_star: Vec<f64>,
    pub t_star: f64,
    pub lambda_star: f64,
    /// `λ_max(A0 + t*A1) − λ*`
    pub positive_eigenvalue: f64,
    pub min_gap: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WellPositioned {
    pub verdict: bool,
    /// First failing condition (1, 2 or 3).
    pub failed_condition: Option<u8>,
    pub reason: String,
    pub certificate: Option<WellPositionedCertificate>,
}

fn eigvec_residual(a: &Mat, v: &Vector) -> f64 {
    let rq = v.dot(&(a * v));
    (a * v - v * rq).norm()
}

/// Three-condition test on a pair of 3×3 symmetric matrices: noncrossing
/// 2-dimensional span, no eigenvector of A1 orthogonal to the top
/// eigenvector w of A0, and a positive eigenvalue of `A0 + t*A1 − λ*I` at
/// the unique `(t*, λ*)` annihilating `z* ⟂ {w, A1w}`.
pub fn well_positioned(a0: &Mat, a1: &Mat, tol: f64) -> Result<WellPositioned> {
    if a0.shape() != (3, 3) || a1.shape() != (3, 3) {
        return Err(Error::ShapeMismatch("well-positioned test needs 3x3 matrices".into()));
    }
    let a0 = linalg::sym(a0);
    let a1 = linalg::sym(a1);
    let fail = |c: u8, reason: String| WellPositioned { verdict: false, failed_condition: Some(c), reason, certificate: None };
    let cert = match spectral::min_gap_on_span(&[a0.clone(), a1.clone()], 1, SpectralMode::Eigen, spectral::DEFAULT_BUDGET, 0) {
        Ok(c) => c,
        Err(Error::DegenerateSpan { ratio }) => {
            return Ok(fail(1, format!("span is not 2-dimensional (gram ratio {ratio:.3e})")));
        }
        Err(e) => return Err(e),
    };
    if cert.verdict == Verdict::CrossingFound || cert.min_gap <= tol {
        return Ok(fail(1, format!("top eigenvalue crosses on the span (min gap {:.3e})", cert.min_gap)));
    }
    let (_, v0) = linalg::sym_eig(&a0);
    let w: Vector = v0.column(0).into_owned();
    let scale = a1.norm().max(1e-300);
    if eigvec_residual(&a1, &w) <= tol * scale {
        return Ok(fail(2, "w is an eigenvector of A1".into()));
    }
    let a1w = &a1 * &w;
    let z = linalg::cross3(&w, &a1w);
    let z = &z / z.norm();
    if eigvec_residual(&a1, &z) <= tol * scale {
        return Ok(fail(2, "A1 has an eigenvector orthogonal to w".into()));
    }
    // (A1 z) t − z λ = −A0 z
    let mut sys = Mat::zeros(3, 2);
    sys.set_column(0, &(&a1 * &z));
    sys.set_column(1, &(-&z));
    let (sol, _) = linalg::lstsq(&sys, &(-(&a0 * &z)));
    let (t_star, lambda_star) = (sol[0], sol[1]);
    let top = linalg::sym_eigvals(&(&a0 + &a1 * t_star))[0];
    let positive = top - lambda_star;
    let certificate = WellPositionedCertificate {
        w: w.iter().copied().collect(),
        z_star: z.iter().copied().collect(),
        t_star,
        lambda_star,
        positive_eigenvalue: positive,
        min_gap: cert.min_gap,
    };
    if positive <= tol {
        return Ok(WellPositioned {
            verdict: false,
            failed_condition: Some(3),
            reason: format!("A0 + t*A1 - lambda*I has no positive eigenvalue ({positive:.3e})"),
            certificate: Some(certificate),
        });
    }
    Ok(WellPositioned { verdict: true, failed_condition: None, reason: "well-positioned".into(), certificate: Some(certificate) })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SectionedCheck {
    pub verdict: bool,
    pub well_positioned: WellPositioned,
    pub sigma: [f64; 2],
    /// Least-squares residuals of the two extra linear systems with the
    /// vectors `(±√(1−σ₂/σ₁), 0, σ₂/σ₁)`.
    pub system_residuals: [f64; 2],
    /// The same systems with the unit vectors `(±√(σ₁²−σ₂²)/σ₁, 0, σ₂/σ₁)`.
    pub unit_vector_residuals: [f64; 2],
    pub note: String,
}

fn pencil_system_residual(a: &Mat, bbt: &Mat, v: &Vector, rhs: &Vector) -> f64 {
    // (tA + λI − BBᵀ)v = rhs  ⇔  [Av, v]·(t, λ) = rhs + BBᵀv
    let mut sys = Mat::zeros(3, 2);
    sys.set_column(0, &(a * v));
    sys.set_column(1, v);
    linalg::lstsq(&sys, &(rhs + bbt * v)).1
}

/// Sufficient test for the (3,2) family `(⟨B,X⟩, ⟨A,XXᵀ⟩)` to be uniquely
/// maximized: `(−BBᵀ, A)` well-positioned and two linear systems in `(t, λ)`
/// infeasible. Inputs are canonicalized first.
pub fn upp32_sectioned_check(a: &Mat, b: &Mat, tol: f64) -> Result<SectionedCheck> {
    if a.shape() != (3, 3) || b.shape() != (3, 2) {
        return Err(Error::ShapeMismatch("sectioned check needs A 3x3 and B 3x2".into()));
    }
    let c = canonicalize(a, b)?;
    let (s1, s2) = (c.basis.sigma[0], c.basis.sigma[1]);
    let bbt = &c.b * c.b.transpose();
    let wp = well_positioned(&(-&bbt), &c.a, tol)?;
    let scale = c.a.norm() + bbt.norm();
    let sys_tol = tol * scale.max(1e-300);
    if s2 <= 1e-12 * s1.max(1.0) {
        let verdict = wp.verdict;
        return Ok(SectionedCheck {
            verdict,
            well_positioned: wp,
            sigma: [s1, s2],
            system_residuals: [f64::INFINITY; 2],
            unit_vector_residuals: [f64::INFINITY; 2],
            note: "rank-one B: coupling term vanishes, verdict from the well-positioned test".into(),
        });
    }
    let rhs = Vector::from_vec(vec![0.0, 0.0, 2.0 * s1 * s2]);
    let r = s2 / s1;
    let p = (1.0 - r).sqrt();
    let q = (s1 * s1 - s2 * s2).sqrt() / s1;
    let res = |x: f64| pencil_system_residual(&c.a, &bbt, &Vector::from_vec(vec![x, 0.0, r]), &rhs);
    let system_residuals = [res(p), res(-p)];
    let unit_vector_residuals = [res(q), res(-q)];
    let systems_ok = system_residuals.iter().all(|&x| x > sys_tol);
    let verdict = wp.verdict && systems_ok;
    let note = if !wp.verdict {
        format!("(-BB^T, A) not well-positioned: {}", wp.reason)
    } else if !systems_ok {
        "an extra linear system is solvable".into()
    } else {
        "certified".into()
    };
    Ok(SectionedCheck { verdict, well_positioned: wp, sigma: [s1, s2], system_residuals, unit_vector_residuals, note })
}

/// `‖BᵀZ‖₁ = √(Tr(BBᵀZ) + 2σ₁σ₂√det(Π_BᵀZΠ_B))` for n×2 B and a rank-2 projector Z.
pub fn trace_norm_via_projector(b: &Mat, z: &Mat) -> Result<f64> {
    let (n, m) = b.shape();
    if m != 2 || z.shape() != (n, n) {
        return Err(Error::ShapeMismatch("need B n x 2 and Z n x n".into()));
    }
    let (u, s, _) = linalg::svd(b);
    let inner = u.transpose() * z * &u;
    let det = inner.determinant();
    if det < -1e-12 {
        return Err(Error::Numerical { message: "negative projected determinant".into(), residual: det });
    }
    let rad = (b * b.transpose()).dot(z) + 2.0 * s[0] * s[1] * det.max(0.0).sqrt();
    if rad < -1e-12 {
        return Err(Error::Numerical { message: "negative radicand".into(), residual: rad });
    }
    Ok(rad.max(0.0).sqrt())
}

/// For n = 3 and `Z = I − zzᵀ`: `det(Π_BᵀZΠ_B) = zᵀ(I − Π_BΠ_Bᵀ)z`.
pub fn projected_det_from_normal(b: &Mat, z: &Vector) -> f64 {
    let (u, _, _) = linalg::svd(b);
    let p = Mat::identity(3, 3) - &u * u.transpose();
    z.dot(&(p * z))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UppMethod {
    Section,
    Chord,
    RgdMultistart,
}

impl std::str::FromStr for UppMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "section" => Ok(UppMethod::Section),
            "chord" => Ok(UppMethod::Chord),
            "rgd-multistart" | "rgd" => Ok(UppMethod::RgdMultistart),
            other => Err(Error::InvalidArgument(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolveOptions {
    pub starts: usize,
    pub seed: u64,
    pub tol: f64,
    /// Explicit tracking constants; estimated when absent.
    pub chord: Option<ChordConfig>,
    pub epsilon: f64,
    pub retraction: Retraction,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { starts: 64, seed: 0, tol: 1e-8, chord: None, epsilon: 1e-2, retraction: Retraction::Qr }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct UppSolution {
    #[serde(with = "crate::io::rowmajor")]
    pub X: Mat,
    /// Original-form objective `‖UᵀX − Wᵀ‖²`.
    pub objective: f64,
    pub method: UppMethod,
    pub diagnostics: serde_json::Value,
}

/// Solves an unbalanced Procrustes instance with the chosen method.
pub fn solve_upp(inst: &UppInstance, method: UppMethod, opts: &SolveOptions) -> Result<UppSolution> {
    inst.validate()?;
    let tr = transform(inst);
    let family = upp_family(&tr.a, &tr.b)?;
    let (n, m) = (inst.n(), inst.m());
    let t1 = [1.0, 1.0];
    let (x, diagnostics) = match method {
        UppMethod::Section => {
            if m == 1 {
                let b = tr.b.column(0).into_owned();
                let r = sections::trs_max(&linalg::sym(&tr.a), &b)?;
                let x = Mat::from_column_slice(n, 1, r.0.as_slice());
                (x, serde_json::json!({"uniqueness_gap": finite_or_null(r.1)}))
            } else if (n, m) == (3, 2) {
                let check = upp32_sectioned_check(&tr.a, &tr.b, opts.tol)?;
                if !check.verdict {
                    return Err(Error::NotCertified);
                }
                let r = sections::upp32_raw(&tr.a, &tr.b, &t1)?;
                (
                    r.point.value,
                    serde_json::json!({
                        "uniqueness_gap": finite_or_null(r.uniqueness_gap),
                        "lift_status": r.lift_status,
                        "sectioned_check": check,
                    }),
                )
            } else {
                return Err(Error::NotCertified);
            }
        }
        UppMethod::RgdMultistart => {
            let rep = oracle::multistart_max_raw(&family, &t1, opts.starts, opts.seed)?;
            (
                rep.best_point.value,
                serde_json::json!({"starts": rep.starts, "cluster_count": rep.cluster_count, "lagrangian_value": rep.best_value}),
            )
        }
        UppMethod::Chord => {
            let x0 = linalg::polar(&tr.b);
            let t0 = [1.0, 0.0];
            let config = match &opts.chord {
                Some(c) => c.clone(),
                None => {
                    let helper: Option<Upp32Section> = if (n, m) == (3, 2) { Upp32Section::new(tr.a.clone(), tr.b.clone()).ok() } else { None };
                    let consts = chord::estimate_constants(
                        &family,
                        &t0,
                        &t1,
                        chord::DEFAULT_CONSTANT_SAMPLES,
                        helper.as_ref().map(|s| s as &dyn Section),
                        opts.seed,
                    )?;
                    ChordConfig::from_constants(opts.epsilon, &consts, opts.retraction)?
                }
            };
            let path = chord::chord_track(&family, &t0, &t1, &x0, &config)?;
            (
                path.final_point.value.clone(),
                serde_json::json!({
                    "epsilon": config.epsilon, "mu": config.mu, "M": config.m, "L": config.l,
                    "outer_steps": path.samples.len() - 1,
                    "total_rgd_iters": path.total_rgd_iters,
                    "iteration_bound": config.iteration_bound(),
                    "final_gradient_norm": path.samples.last().map(|s| s.gradient_norm),
                }),
            )
        }
    };
    let objective = inst.objective(&x);
    Ok(UppSolution { X: x, objective, method, diagnostics })
}

fn finite_or_null(x: f64) -> serde_json::Value {
    if x.is_finite() {
        serde_json::json!(x)
    } else {
        serde_json::Value::Null
    }
}

/// Axis scales of the synthetic point cloud: a flattened, elongated shape.
pub const PLANTED_SCALES: [f64; 3] = [1.0, 0.7, 0.15];

/// Synthetic (3,2) instance: `d` Gaussian points in R³ with per-axis
/// `scales`, a planted Stiefel point X̄ and `W = X̄ᵀU + noise·G`.
pub fn planted_instance<R: rand::Rng + ?Sized>(d: usize, scales: [f64; 3], noise: f64, rng: &mut R) -> (UppInstance, Mat) {
    let mut u = linalg::gaussian(3, d, rng);
    for (i, s) in scales.iter().enumerate() {
        u.row_mut(i).scale_mut(*s);
    }
    let xbar = linalg::random_stiefel(3, 2, rng);
    let w = xbar.transpose() * &u + linalg::gaussian(2, d, rng) * noise;
    (UppInstance { u, w }, xbar)
}
