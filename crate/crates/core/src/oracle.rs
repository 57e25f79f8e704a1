//! Ground-truth machinery: multistart Riemannian ascent, constrained
//! multistart primal, projective grid search and concavity probes.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lagrangian::{MultiplierVector, ObjectiveFamily};
use crate::linalg::{self, Mat, Vector};
use crate::manifolds::{ManifoldPoint, ManifoldSpec, Retraction};

/// Points closer than this (ambient norm) belong to one cluster.
pub const CLUSTER_RADIUS: f64 = 1e-4;

/// A smooth objective on a manifold, maximized by `ascend`.
pub trait Objective: Sync {
    fn spec(&self) -> &ManifoldSpec;
    fn value(&self, x: &Mat) -> Result<f64>;
    fn euclidean_gradient(&self, x: &Mat) -> Result<Mat>;
}

/// `⟨t, f(x)⟩` for a fixed coefficient vector.
pub struct Weighted<'a> {
    pub family: &'a ObjectiveFamily,
    pub t: &'a [f64],
}

impl Objective for Weighted<'_> {
    fn spec(&self) -> &ManifoldSpec {
        &self.family.spec
    }
    fn value(&self, x: &Mat) -> Result<f64> {
        self.family.lagrangian_raw(self.t, x)
    }
    fn euclidean_gradient(&self, x: &Mat) -> Result<Mat> {
        self.family.euclidean_gradient_raw(self.t, x)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct AscentOptions {
    pub grad_tol: f64,
    pub max_iters: usize,
    pub retraction: Retraction,
}

impl Default for AscentOptions {
    fn default() -> Self {
        Self { grad_tol: 1e-9, max_iters: 20_000, retraction: Retraction::Qr }
    }
}

#[derive(Clone, Debug)]
pub struct AscentResult {
    pub point: Mat,
    pub value: f64,
    pub grad_norm: f64,
    pub iters: usize,
}

/// Riemannian gradient ascent with Barzilai–Borwein trial steps and Armijo
/// backtracking. Near convergence, where value differences drown in
/// rounding, a step is also accepted if it keeps the value within rounding
/// and shrinks the gradient.
pub fn ascend(obj: &dyn Objective, x0: &Mat, opts: &AscentOptions) -> Result<AscentResult> {
    let spec = obj.spec();
    let mut x = x0.clone();
    let mut val = obj.value(&x)?;
    let mut g = spec.project(&x, &obj.euclidean_gradient(&x)?)?;
    let mut gn = g.norm();
    let mut step = 1.0 / (1.0 + obj.euclidean_gradient(&x)?.norm());
    let mut iters = 0;
    while gn > opts.grad_tol && iters < opts.max_iters {
        iters += 1;
        let mut s = step;
        let mut next = None;
        while s > 1e-18 {
            let y = spec.retract(&x, &(&g * s), opts.retraction)?;
            let vy = obj.value(&y)?;
            if vy >= val + 1e-4 * s * gn * gn {
                next = Some((y, vy, None));
                break;
            }
            if vy >= val - 4.0 * f64::EPSILON * (1.0 + val.abs()) {
                let gy = spec.project(&y, &obj.euclidean_gradient(&y)?)?;
                if gy.norm() < gn {
                    next = Some((y, vy, Some(gy)));
                    break;
                }
            }
            s *= 0.5;
        }
        let Some((y, vy, gy)) = next else { break };
        let gy = match gy {
            Some(gy) => gy,
            None => spec.project(&y, &obj.euclidean_gradient(&y)?)?,
        };
        // BB step from ambient differences; for ascent ⟨Δx, Δg⟩ < 0.
        let dx = &y - &x;
        let dg = &gy - &g;
        let sy = dx.dot(&dg);
        step = if sy < 0.0 { (dx.norm_squared() / -sy).clamp(1e-10, 1e10) } else { (2.0 * s).min(1e10) };
        x = y;
        val = vy;
        g = gy;
        gn = g.norm();
    }
    Ok(AscentResult { point: x, value: val, grad_norm: gn, iters })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Cluster {
    pub value: f64,
    pub count: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OracleReport {
    pub best_value: f64,
    pub best_point: ManifoldPoint,
    pub starts: usize,
    /// Distinct local maximizers found, merged within `CLUSTER_RADIUS`.
    pub cluster_count: usize,
    pub clusters: Vec<Cluster>,
    /// Best value minus the best value of any other cluster (+∞ if none).
    pub second_gap: f64,
    pub max_grad_norm: f64,
}

fn start_rng(seed: u64, i: usize) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(i as u64 + 1);
    r
}

pub fn multistart_max(family: &ObjectiveFamily, t: &MultiplierVector, starts: usize, seed: u64) -> Result<OracleReport> {
    multistart_max_raw(family, &t.t, starts, seed)
}

/// Runs `starts` independent ascents from seeded random points.
pub fn multistart_max_raw(family: &ObjectiveFamily, t: &[f64], starts: usize, seed: u64) -> Result<OracleReport> {
    if t.len() != family.len() {
        return Err(Error::ShapeMismatch(format!("{} multipliers for {} components", t.len(), family.len())));
    }
    let obj = Weighted { family, t };
    multistart(&obj, starts, seed, &AscentOptions::default())
}

pub fn multistart(obj: &dyn Objective, starts: usize, seed: u64, opts: &AscentOptions) -> Result<OracleReport> {
    let spec = obj.spec();
    if !spec.supports_tangent() {
        return Err(Error::UnsupportedManifold { op: "multistart ascent".into(), manifold: spec.name() });
    }
    if starts == 0 {
        return Err(Error::InvalidArgument("at least one start is required".into()));
    }
    let runs: Vec<AscentResult> = (0..starts)
        .into_par_iter()
        .map(|i| {
            let x0 = spec.random_point_rng(&mut start_rng(seed, i));
            ascend(obj, &x0, opts)
        })
        .collect::<Result<_>>()?;
    Ok(summarize(spec, runs))
}

fn summarize(spec: &ManifoldSpec, mut runs: Vec<AscentResult>) -> OracleReport {
    let starts = runs.len();
    let max_grad_norm = runs.iter().map(|r| r.grad_norm).fold(0.0, f64::max);
    runs.sort_by(|a, b| b.value.total_cmp(&a.value));
    let mut centers: Vec<(Mat, Cluster)> = Vec::new();
    for r in &runs {
        match centers.iter_mut().find(|(c, _)| (c - &r.point).norm() <= CLUSTER_RADIUS) {
            Some((_, cl)) => cl.count += 1,
            None => centers.push((r.point.clone(), Cluster { value: r.value, count: 1 })),
        }
    }
    let best = &runs[0];
    let second_gap = centers.get(1).map_or(f64::INFINITY, |(_, c)| best.value - c.value);
    OracleReport {
        best_value: best.value,
        best_point: ManifoldPoint::new_unchecked(spec.clone(), best.point.clone()),
        starts,
        cluster_count: centers.len(),
        clusters: centers.into_iter().map(|(_, c)| c).collect(),
        second_gap,
        max_grad_norm,
    }
}

/// Augmented-Lagrangian objective `f₀ − Σ yᵢhᵢ − (ρ/2)Σ hᵢ²`, `hᵢ = fᵢ − cᵢ`.
struct AugLag<'a> {
    family: &'a ObjectiveFamily,
    c: &'a [f64],
    y: Vec<f64>,
    rho: f64,
}

impl Objective for AugLag<'_> {
    fn spec(&self) -> &ManifoldSpec {
        &self.family.spec
    }
    fn value(&self, x: &Mat) -> Result<f64> {
        let f = self.family.values(x)?;
        let mut v = f[0];
        for i in 0..self.c.len() {
            let h = f[i + 1] - self.c[i];
            v -= self.y[i] * h + 0.5 * self.rho * h * h;
        }
        Ok(v)
    }
    fn euclidean_gradient(&self, x: &Mat) -> Result<Mat> {
        let f = self.family.values(x)?;
        let mut w = vec![1.0];
        for i in 0..self.c.len() {
            w.push(-(self.y[i] + self.rho * (f[i + 1] - self.c[i])));
        }
        self.family.euclidean_gradient_raw(&w, x)
    }
}

fn residuals(family: &ObjectiveFamily, c: &[f64], x: &Mat) -> Result<Vector> {
    let f = family.values(x)?;
    Ok(Vector::from_iterator(c.len(), (0..c.len()).map(|i| f[i + 1] - c[i])))
}

/// Gauss–Newton feasibility restoration in the tangent space: minimum-norm
/// tangent steps solving the linearized constraints.
fn restore(family: &ObjectiveFamily, c: &[f64], x0: &Mat, retraction: Retraction) -> Result<(Mat, f64)> {
    let spec = &family.spec;
    let k = c.len();
    let mut x = x0.clone();
    let mut h = residuals(family, c, &x)?;
    for _ in 0..60 {
        if h.norm() <= 1e-13 {
            break;
        }
        let grads: Vec<Mat> = (0..k)
            .map(|i| {
                let mut w = vec![0.0; k + 1];
                w[i + 1] = 1.0;
                spec.project(&x, &family.euclidean_gradient_raw(&w, &x)?)
            })
            .collect::<Result<_>>()?;
        let gram = Mat::from_fn(k, k, |i, j| grads[i].dot(&grads[j]));
        let (alpha, _) = linalg::lstsq(&gram, &(-&h));
        let mut step = Mat::zeros(x.nrows(), x.ncols());
        for (g, a) in grads.iter().zip(alpha.iter()) {
            step += g * *a;
        }
        let mut s = 1.0;
        let mut improved = false;
        while s > 1e-6 {
            let y = spec.retract(&x, &(&step * s), retraction)?;
            let hy = residuals(family, c, &y)?;
            if hy.norm() < h.norm() {
                x = y;
                h = hy;
                improved = true;
                break;
            }
            s *= 0.5;
        }
        if !improved {
            break;
        }
    }
    Ok((x, h.norm()))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConstrainedReport {
    /// `f₀` at the best feasible point; `-∞` if no start became feasible.
    pub best_value: f64,
    pub best_point: Option<ManifoldPoint>,
    pub residual: f64,
    pub feasible_starts: usize,
    pub starts: usize,
}

/// Feasibility tolerance for constrained primal points.
pub const FEAS_TOL: f64 = 1e-10;

/// Multistart lower bound for `max f₀ s.t. fᵢ = cᵢ`: augmented-Lagrangian
/// ascent per start, then Gauss–Newton restoration to `FEAS_TOL`.
pub fn constrained_max(family: &ObjectiveFamily, c: &[f64], starts: usize, seed: u64) -> Result<ConstrainedReport> {
    let spec = &family.spec;
    if !spec.supports_tangent() {
        return Err(Error::UnsupportedManifold { op: "constrained multistart".into(), manifold: spec.name() });
    }
    if c.len() + 1 != family.len() {
        return Err(Error::ShapeMismatch(format!("{} right-hand sides for {} components", c.len(), family.len())));
    }
    let opts = AscentOptions { grad_tol: 1e-9, max_iters: 2000, retraction: Retraction::Qr };
    let runs: Vec<Option<(f64, Mat, f64)>> = (0..starts)
        .into_par_iter()
        .map(|i| -> Result<Option<(f64, Mat, f64)>> {
            let mut x = spec.random_point_rng(&mut start_rng(seed, i));
            let mut al = AugLag { family, c, y: vec![0.0; c.len()], rho: 10.0 };
            let mut prev = f64::INFINITY;
            for _ in 0..40 {
                x = ascend(&al, &x, &opts)?.point;
                let h = residuals(family, c, &x)?;
                let hn = h.norm();
                for (yi, hi) in al.y.iter_mut().zip(h.iter()) {
                    *yi += al.rho * hi;
                }
                if hn <= 1e-11 {
                    break;
                }
                if hn > 0.25 * prev {
                    al.rho = (al.rho * 4.0).min(1e6);
                }
                prev = hn;
            }
            let (x, res) = restore(family, c, &x, Retraction::Qr)?;
            if res > FEAS_TOL {
                return Ok(None);
            }
            Ok(Some((family.values(&x)?[0], x, res)))
        })
        .collect::<Result<_>>()?;
    let feasible: Vec<_> = runs.into_iter().flatten().collect();
    let best = feasible.iter().max_by(|a, b| a.0.total_cmp(&b.0));
    Ok(ConstrainedReport {
        best_value: best.map_or(f64::NEG_INFINITY, |b| b.0),
        best_point: best.map(|b| ManifoldPoint::new_unchecked(spec.clone(), b.1.clone())),
        residual: best.map_or(f64::INFINITY, |b| b.2),
        feasible_starts: feasible.len(),
        starts,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridResult {
    pub max: f64,
    pub argmax: Vec<f64>,
    /// Upper bound on `true max − max`.
    pub bound: f64,
    pub points: usize,
}

/// Grid maximization of `zᵀQz + c·|wᵀz|` over the unit sphere in R³
/// (equivalently the projective plane) on a Fibonacci lattice of
/// `resolution²` points.
pub fn grid_search_projective(q: &Mat, c: f64, w: &Vector, resolution: usize) -> Result<GridResult> {
    if resolution < 100 {
        return Err(Error::InvalidArgument(format!("resolution {resolution} below 100")));
    }
    if q.shape() != (3, 3) || w.len() != 3 {
        return Err(Error::ShapeMismatch("grid search works in R³".into()));
    }
    let q = linalg::sym(q);
    let n = resolution * resolution;
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let h = |z: &Vector| z.dot(&(&q * z)) + c * w.dot(z).abs();
    let mut best = (f64::NEG_INFINITY, Vector::zeros(3));
    for i in 0..n {
        let zc = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
        let r = (1.0 - zc * zc).sqrt();
        let th = golden * i as f64;
        let z = Vector::from_vec(vec![r * th.cos(), r * th.sin(), zc]);
        let v = h(&z);
        if v > best.0 {
            best = (v, z);
        }
    }
    // Chordal covering radius of the lattice is below 4/√n; h is Lipschitz
    // on the sphere with constant 2‖Q‖ + |c|‖w‖.
    let lip = 2.0 * linalg::singular_values(&q)[0] + c.abs() * w.norm();
    Ok(GridResult { max: best.0, argmax: best.1.iter().copied().collect(), bound: lip * 4.0 / (n as f64).sqrt(), points: n })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConcavityReport {
    pub max_violation: f64,
    pub triples_checked: usize,
    pub concave: bool,
}

/// Midpoint-concavity check of sampled values `(c, V(c))`: for every pair
/// whose midpoint is also sampled, `V(mid) ≥ (V(a)+V(b))/2 − tol`.
pub fn concavity_probe(samples: &[(Vec<f64>, f64)], tol: f64) -> Result<ConcavityReport> {
    if samples.len() < 3 {
        return Err(Error::InvalidArgument(format!("{} samples; at least 3 are needed", samples.len())));
    }
    let dim = samples[0].0.len();
    if samples.iter().any(|s| s.0.len() != dim) {
        return Err(Error::ShapeMismatch("samples have differing dimensions".into()));
    }
    let key = |c: &[f64]| -> Vec<i64> { c.iter().map(|v| (v * 1e8).round() as i64).collect() };
    let index: HashMap<Vec<i64>, f64> = samples.iter().filter(|s| s.1.is_finite()).map(|s| (key(&s.0), s.1)).collect();
    let mut worst = 0.0f64;
    let mut count = 0;
    for (i, a) in samples.iter().enumerate() {
        for b in &samples[i + 1..] {
            if !(a.1.is_finite() && b.1.is_finite()) {
                continue;
            }
            let mid: Vec<f64> = a.0.iter().zip(&b.0).map(|(x, y)| 0.5 * (x + y)).collect();
            if let Some(&vm) = index.get(&key(&mid)) {
                count += 1;
                worst = worst.max(0.5 * (a.1 + b.1) - vm);
            }
        }
    }
    Ok(ConcavityReport { max_violation: worst, triples_checked: count, concave: worst <= tol })
}
