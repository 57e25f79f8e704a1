//! The polar dual of `max f₀ s.t. fᵢ = cᵢ`, solved by the ellipsoid method
//! with a separation oracle built from a dual section.
//!
//! After recentering `f̃ = (f − ȳ)/r` so that 0 is interior to `conv f̃(M)`,
//! the dual is `min (1 − Σ c̃ᵢtᵢ)/t₀` over the polar set `{t : h̃(t) ≤ 1}`
//! with `h̃` the support function, evaluated as `⟨t, f̃(D(t))⟩`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::manifolds::ManifoldPoint;
use crate::sections::Section;

#[derive(Clone, Debug)]
pub struct DualOptions {
    pub eps: f64,
    /// Outer radius for the multiplier search; estimated when absent.
    pub radius: Option<f64>,
    /// Objective spread estimate; estimated when absent.
    pub spread: Option<f64>,
    /// Random directions used for recentering.
    pub samples: usize,
    pub seed: u64,
    /// `(μ, M)` for the drift certificate of the recovered primal point.
    pub constants: Option<(f64, f64)>,
}

impl Default for DualOptions {
    fn default() -> Self {
        Self { eps: 1e-9, radius: None, spread: None, samples: 48, seed: 0, constants: None }
    }
}

/// The affine map `f̃ = (f − shift)/scale`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Recentering {
    pub shift: Vec<f64>,
    pub scale: f64,
    /// Smallest sampled support value `h̃(s)` over unit s; an estimate of the
    /// inradius of `conv f̃(M)` around 0.
    pub inradius_estimate: f64,
}

impl Recentering {
    pub fn identity(dim: usize) -> Self {
        Self { shift: vec![0.0; dim], scale: 1.0, inradius_estimate: f64::NAN }
    }

    pub fn apply(&self, y: &[f64]) -> Vec<f64> {
        y.iter().zip(&self.shift).map(|(v, s)| (v - s) / self.scale).collect()
    }

    /// Support function of the recentered image.
    pub fn support(&self, section: &dyn Section, t: &[f64]) -> Result<(f64, Vec<f64>, ManifoldPoint)> {
        let r = section.maximize(t)?;
        let y = self.apply(&section.family().values(&r.point.value)?);
        Ok((dot(t, &y), y, r.point))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn unit_directions(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for i in 0..dim {
        for s in [1.0, -1.0] {
            let mut e = vec![0.0; dim];
            e[i] = s;
            out.push(e);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..count {
        let g = linalg::gaussian(dim, 1, &mut rng);
        out.push((&g / g.norm()).iter().copied().collect());
    }
    out
}

/// Mean of the distinct sample points, the sample radius around it, and the
/// normal of a flat direction of the cloud if there is one.
fn sample_geometry(ys: &[Vec<f64>]) -> (Vec<f64>, f64, Option<Vec<f64>>) {
    let dim = ys[0].len();
    // Distinct image points only: repeated vertices would bias the mean
    // toward a face of the hull.
    let mut distinct: Vec<&Vec<f64>> = Vec::new();
    for y in ys {
        if !distinct.iter().any(|d| d.iter().zip(y).all(|(a, b)| (a - b).abs() <= 1e-8 * (1.0 + a.abs()))) {
            distinct.push(y);
        }
    }
    let mean: Vec<f64> = (0..dim).map(|j| distinct.iter().map(|y| y[j]).sum::<f64>() / distinct.len() as f64).collect();
    let centered = Mat::from_fn(distinct.len(), dim, |i, j| distinct[i][j] - mean[j]);
    let scale = (0..distinct.len()).map(|i| centered.row(i).norm()).fold(0.0, f64::max);
    if scale <= 1e-300 {
        return (mean, scale, None);
    }
    let cov = centered.transpose() * &centered / (distinct.len() as f64 * scale * scale);
    let (ev, vecs) = linalg::sym_eig(&cov);
    // Fewer than dim + 1 distinct points always span a flat.
    let flat = distinct.len() <= dim || ev[dim - 1] <= 1e-12;
    let normal = flat.then(|| vecs.column(dim - 1).iter().copied().collect());
    (mean, scale, normal)
}

/// Shifts f by the mean of sampled section values and rescales so the
/// samples lie in the unit ball. Fails when the sampled image is flat.
pub fn recenter(section: &dyn Section, samples: usize, seed: u64) -> Result<Recentering> {
    let dim = section.family().len();
    let dirs = unit_directions(dim, samples, seed);
    let fam = section.family();
    let mut ys: Vec<Vec<f64>> = dirs.iter().map(|d| fam.values(&section.maximize(d)?.point.value)).collect::<Result<_>>()?;
    // A flat sample cloud is either a flat image or a sampling accident;
    // the width of the image along the suspected normal decides.
    let mut rounds = 0;
    let (mean, scale) = loop {
        let (mean, scale, normal) = sample_geometry(&ys);
        if scale <= 1e-300 {
            return Err(Error::DegenerateImage("f is constant on the sampled maximizers".into()));
        }
        let Some(normal) = normal else { break (mean, scale) };
        let neg: Vec<f64> = normal.iter().map(|v| -v).collect();
        let yp = fam.values(&section.maximize(&normal)?.point.value)?;
        let ym = fam.values(&section.maximize(&neg)?.point.value)?;
        let width = dot(&normal, &yp) - dot(&normal, &ym);
        if width <= 1e-10 * scale || rounds == 2 * dim {
            return Err(Error::DegenerateImage(format!(
                "f(M) lies in an affine hyperplane with normal {normal:?} (width {width:.3e}); remove the redundant component"
            )));
        }
        ys.push(yp);
        ys.push(ym);
        rounds += 1;
    };
    let rc = Recentering { shift: mean, scale, inradius_estimate: f64::INFINITY };
    let mut rho = f64::INFINITY;
    for d in &dirs {
        rho = rho.min(rc.support(section, d)?.0);
    }
    if rho <= 0.0 {
        return Err(Error::DegenerateImage(format!("0 is not interior to the sampled hull (support {rho:.3e})")));
    }
    Ok(Recentering { inradius_estimate: rho, ..rc })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum PolarQuery {
    Inside { support: f64 },
    Violated { y: Vec<f64>, support: f64 },
}

/// Membership of t in the polar of the recentered image.
pub fn separation_oracle(section: &dyn Section, rc: &Recentering, t: &[f64]) -> Result<PolarQuery> {
    let (h, y, _) = rc.support(section, t)?;
    Ok(if h <= 1.0 { PolarQuery::Inside { support: h } } else { PolarQuery::Violated { y, support: h } })
}

/// One deep-cut ellipsoid step for `{x : (x−c)ᵀP⁻¹(x−c) ≤ 1} ∩ {aᵀx ≤ b}`.
/// Returns the new center and shape with the predicted `ln det` change, or
/// `None` when the halfspace misses the ellipsoid.
pub fn ellipsoid_step(c: &Vector, p: &Mat, a: &Vector, b: f64) -> Option<(Vector, Mat, f64)> {
    let n = c.len() as f64;
    let pa = p * a;
    let s = a.dot(&pa).sqrt();
    if !(s > 0.0 && s.is_finite()) {
        return None;
    }
    let alpha = (a.dot(c) - b) / s;
    if alpha >= 1.0 {
        return None;
    }
    if alpha <= -1.0 / n {
        return Some((c.clone(), p.clone(), 0.0));
    }
    let g = pa / s;
    if c.len() == 1 {
        // Interval [c − w, c + w] cut at x ≤ c + (−α)w (after orienting a).
        let w = p[(0, 0)].sqrt();
        let sign = a[0].signum();
        let (lo, hi) = if sign > 0.0 { (c[0] - w, c[0] - alpha * w) } else { (c[0] + alpha * w, c[0] + w) };
        let nw = 0.5 * (hi - lo);
        let nc = Vector::from_element(1, 0.5 * (hi + lo));
        let np = Mat::from_element(1, 1, nw * nw);
        return Some((nc, np, 2.0 * (nw / w).ln()));
    }
    let tau = (1.0 + n * alpha) / (n + 1.0);
    let delta = n * n * (1.0 - alpha * alpha) / (n * n - 1.0);
    let sigma = 2.0 * (1.0 + n * alpha) / ((n + 1.0) * (1.0 + alpha));
    let nc = c - &g * tau;
    let np = (p - &g * g.transpose() * sigma) * delta;
    Some((nc, linalg::sym(&np), n * delta.ln() + (1.0 - sigma).ln()))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DualResult {
    /// Multiplier for the recentered family (same maximizers as the original).
    pub t_hat: Vec<f64>,
    pub dual_value: f64,
    pub primal_witness: ManifoldPoint,
    /// `f₀(D(t̂))`.
    pub witness_objective: f64,
    /// `fᵢ(D(t̂)) − cᵢ`.
    pub constraint_residual: Vec<f64>,
    /// `(M/μ)·eps` when constants are supplied.
    pub certified_drift: Option<f64>,
    pub iterations: usize,
    pub radius: f64,
    pub boundary_suspect: bool,
    /// The ellipsoid became empty before the iteration budget, which means
    /// the optimum was outside the initial ball.
    pub collapsed: bool,
    pub recentering: Recentering,
}

/// Ball widenings tried before reporting a collapsed result.
pub const MAX_RADIUS_RETRIES: usize = 10;

/// Solves the dual for right-hand side `c`, recentering first.
pub fn solve(section: &dyn Section, c: &[f64], opts: &DualOptions) -> Result<DualResult> {
    let rc = recenter(section, opts.samples, opts.seed)?;
    if let Some(r) = opts.radius {
        return minimize_dual(section, &rc, c, r, opts);
    }
    // The sampled inradius overestimates the true one; widen the ball when
    // the ellipsoid collapses before its iteration budget.
    let mut radius = 2.0 / rc.inradius_estimate;
    let mut last = None;
    for _ in 0..MAX_RADIUS_RETRIES {
        let res = minimize_dual(section, &rc, c, radius, opts)?;
        if !res.collapsed {
            return Ok(res);
        }
        last = Some(res);
        radius *= 8.0;
    }
    Ok(last.expect("at least one attempt"))
}

fn phi(t: &[f64], c: &[f64]) -> f64 {
    (1.0 - dot(&t[1..], c)) / t[0]
}

/// Ellipsoid minimization of `φ(t) = (1 − Σ c̃ᵢtᵢ)/t₀` over the polar set
/// and `t₀ ≥ eps/R`. `φ` is linear-fractional, so objective cuts are the
/// halfspaces `{φ ≤ φ_best}` rather than subgradient cuts.
pub fn minimize_dual(section: &dyn Section, rc: &Recentering, c: &[f64], radius: f64, opts: &DualOptions) -> Result<DualResult> {
    let dim = section.family().len();
    if c.len() + 1 != dim {
        return Err(Error::ShapeMismatch(format!("{} right-hand sides for {} components", c.len(), dim)));
    }
    if !(radius > 0.0 && radius.is_finite() && opts.eps > 0.0) {
        return Err(Error::InvalidArgument(format!("radius {radius} and eps {} must be positive", opts.eps)));
    }
    let ct: Vec<f64> = c.iter().zip(&rc.shift[1..]).map(|(ci, s)| (ci - s) / rc.scale).collect();
    let floor = opts.eps / radius;
    let spread = opts.spread.unwrap_or(1.0 + (1.0 + ct.iter().map(|v| v * v).sum::<f64>().sqrt()) * radius);
    let n = dim as f64;
    let iters = ((2.0 * n * n * (radius * spread / opts.eps).ln()).ceil() as usize).max(50);

    let mut center = Vector::zeros(dim);
    let mut shape = Mat::identity(dim, dim) * (radius * radius);
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut done = 0;
    let mut collapsed = false;
    let mut best_center_norm = 0.0;
    for _ in 0..iters {
        done += 1;
        // Widths at rounding level: the shape matrix carries no more information.
        let width = shape.diagonal().iter().fold(0.0f64, |w, &d| w.max(d)).sqrt();
        if !(width > 1e-14 * (1.0 + center.norm())) {
            break;
        }
        let t: Vec<f64> = center.iter().copied().collect();
        let mut objective_cut = false;
        let (a, b) = if t[0] < floor {
            let mut a = Vector::zeros(dim);
            a[0] = -1.0;
            (a, -floor)
        } else {
            let (h, y, _) = rc.support(section, &t)?;
            if h > 1.0 {
                (Vector::from_vec(y), 1.0)
            } else {
                // Scaling a feasible point out to the polar boundary only lowers φ.
                let cand = if h > 0.0 { t.iter().map(|v| v / h).collect() } else { t.clone() };
                for tc in [t.clone(), cand] {
                    let v = phi(&tc, &ct);
                    if best.as_ref().is_none_or(|(bv, _)| v < *bv) {
                        best = Some((v, tc));
                        best_center_norm = center.norm();
                    }
                }
                let fb = best.as_ref().expect("set above").0;
                let mut a = Vector::zeros(dim);
                a[0] = -fb;
                for i in 1..dim {
                    a[i] = -ct[i - 1];
                }
                objective_cut = true;
                (a, -1.0)
            }
        };
        match ellipsoid_step(&center, &shape, &a, b) {
            Some((nc, np, _)) => {
                center = nc;
                shape = np;
            }
            None => {
                // An empty sublevel cut means convergence; an empty
                // feasibility cut means nothing feasible is left in the ball.
                collapsed = !objective_cut;
                break;
            }
        }
    }
    let Some((fval, t_hat)) = best else {
        return Err(Error::BudgetExhausted(format!("no feasible multiplier found in {done} ellipsoid iterations")));
    };
    collapsed |= best_center_norm > 0.5 * radius;
    let boundary_suspect = t_hat[0] <= 4.0 * floor;
    if boundary_suspect {
        infeasibility_check(section, rc, &ct, &t_hat)?;
    }
    let (point, drift) = recover_primal(section, &t_hat, opts.constants, opts.eps)?;
    let fx = section.family().values(&point.value)?;
    Ok(DualResult {
        dual_value: rc.scale * fval + rc.shift[0],
        witness_objective: fx[0],
        constraint_residual: fx[1..].iter().zip(c).map(|(f, ci)| f - ci).collect(),
        t_hat,
        primal_witness: point,
        certified_drift: drift,
        iterations: done,
        radius,
        boundary_suspect,
        collapsed,
        recentering: rc.clone(),
    })
}

/// When `t̂₀` sits at the floor, c may lie outside the projected image;
/// look for a direction s with `⟨s, c̃⟩ > h̃(0, s)`.
fn infeasibility_check(section: &dyn Section, rc: &Recentering, ct: &[f64], t_hat: &[f64]) -> Result<()> {
    let k = ct.len();
    let mut cands: Vec<Vec<f64>> = Vec::new();
    let tail: f64 = t_hat[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
    if tail > 0.0 {
        cands.push(t_hat[1..].iter().map(|v| -v / tail).collect());
    }
    let cn: f64 = ct.iter().map(|v| v * v).sum::<f64>().sqrt();
    if cn > 0.0 {
        cands.push(ct.iter().map(|v| v / cn).collect());
    }
    for i in 0..k {
        for s in [1.0, -1.0] {
            let mut e = vec![0.0; k];
            e[i] = s;
            cands.push(e);
        }
    }
    for s in cands {
        let mut t = vec![0.0];
        t.extend_from_slice(&s);
        let (h, _, _) = rc.support(section, &t)?;
        let v = dot(&s, ct);
        if v > h + 1e-9 {
            return Err(Error::DualInfeasible { direction: s, value: v * rc.scale, support: h * rc.scale });
        }
    }
    Ok(())
}

/// `D(t̂)` with the drift bound `(M/μ)·eps` when constants are known.
pub fn recover_primal(section: &dyn Section, t_hat: &[f64], constants: Option<(f64, f64)>, eps: f64) -> Result<(ManifoldPoint, Option<f64>)> {
    if !(t_hat[0] > 0.0) {
        return Err(Error::InvalidMultiplier(format!("t0 = {} must be positive", t_hat[0])));
    }
    let point = section.maximize(t_hat)?.point;
    let drift = constants.map(|(mu, m)| m / mu * eps);
    Ok((point, drift))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lagrangian::{Component, ObjectiveFamily};
    use crate::manifolds::ManifoldSpec;
    use crate::sections::{GramSection, LiepSection};

    fn qcqp() -> GramSection {
        GramSection::new(
            ObjectiveFamily::new(
                ManifoldSpec::Sphere { n: 3 },
                vec![Component::SphereQuadratic { matrix: linalg::diag(&[3.0, 1.0, 0.0]) }, Component::SphereQuadratic { matrix: linalg::diag(&[1.0, 2.0, 3.0]) }],
            )
            .unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn oracle_examples_k0() {
        let s = GramSection::new(ObjectiveFamily::new(ManifoldSpec::Sphere { n: 2 }, vec![Component::SphereQuadratic { matrix: linalg::diag(&[1.0, 0.0]) }]).unwrap()).unwrap();
        let id = Recentering::identity(1);
        assert!(matches!(separation_oracle(&s, &id, &[0.5]).unwrap(), PolarQuery::Inside { .. }));
        match separation_oracle(&s, &id, &[2.0]).unwrap() {
            PolarQuery::Violated { y, support } => {
                assert_eq!(y, vec![1.0]);
                assert_eq!(support, 2.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn diagonal_qcqp_dual() {
        let r = solve(&qcqp(), &[2.0], &DualOptions::default()).unwrap();
        assert!((r.dual_value - 1.5).abs() < 1e-4, "{}", r.dual_value);
        assert!(!r.boundary_suspect);
    }

    #[test]
    fn small_multipliers_inside_after_recentering() {
        let s = qcqp();
        let rc = recenter(&s, 16, 0).unwrap();
        assert!(matches!(separation_oracle(&s, &rc, &[1e-3, 1e-3]).unwrap(), PolarQuery::Inside { .. }));
    }

    #[test]
    fn unconstrained_dual_is_max() {
        let s = LiepSection::new(vec![linalg::diag(&[3.0, 1.0, 0.0])], vec![1.0, 0.0, 0.0]).unwrap();
        // f(M) = [0, 3]: recentering is fine in one dimension.
        let r = solve(&s, &[], &DualOptions::default()).unwrap();
        assert!((r.dual_value - 3.0).abs() < 1e-6, "{}", r.dual_value);
    }

    #[test]
    fn constant_component_is_degenerate() {
        let s = GramSection::new(
            ObjectiveFamily::new(
                ManifoldSpec::Sphere { n: 3 },
                vec![Component::SphereQuadratic { matrix: linalg::diag(&[3.0, 1.0, 0.0]) }, Component::SphereQuadratic { matrix: Mat::identity(3, 3) }],
            )
            .unwrap(),
        )
        .unwrap();
        assert!(matches!(recenter(&s, 16, 0), Err(Error::DegenerateImage(_))));
    }

    #[test]
    fn infeasible_rhs_detected() {
        let r = solve(&qcqp(), &[5.0], &DualOptions::default());
        assert!(matches!(r, Err(Error::DualInfeasible { .. })), "{r:?}");
    }

    #[test]
    fn deep_cut_volume_factor() {
        let c = Vector::from_vec(vec![0.1, -0.2, 0.3]);
        let p = Mat::from_row_slice(3, 3, &[2.0, 0.3, 0.0, 0.3, 1.0, 0.1, 0.0, 0.1, 0.5]);
        let a = Vector::from_vec(vec![1.0, 0.5, -1.0]);
        let (_, np, pred) = ellipsoid_step(&c, &p, &a, a.dot(&c) - 0.1).unwrap();
        let actual = np.determinant().ln() - p.determinant().ln();
        assert!((actual - pred).abs() < 1e-10);
        assert!(pred < -1.0 / 6.0);
    }

    #[test]
    fn negative_t0_rejected_for_recovery() {
        assert!(matches!(recover_primal(&qcqp(), &[0.0, 1.0], None, 1e-6), Err(Error::InvalidMultiplier(_))));
    }
}
