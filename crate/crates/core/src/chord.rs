//! CHORD path tracking: move the multiplier from t0 to t1 in increments
//! sized by the section's Lipschitz bound and re-converge after each
//! increment with a fixed number of warm-started gradient steps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lagrangian::ObjectiveFamily;
use crate::linalg::{self, Mat};
use crate::manifolds::{self, ManifoldPoint, Retraction, TAU_FEAS};
use crate::oracle;
use crate::sections::Section;

/// Path samples used by `estimate_constants`.
pub const DEFAULT_CONSTANT_SAMPLES: usize = 21;
/// Extra sweeps of K iterations allowed when the final gradient test fails.
pub const MAX_SAFEGUARD_SWEEPS: usize = 20;
const MAX_TOTAL_ITERS: f64 = 5e8;

/// Curvature and drift constants along the path `t(λ) = t0 + λ(t1 − t0)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathConstants {
    /// Strong-concavity constant: `∇²ℓ ⪯ −μ·I` near the tracked maximizers.
    pub mu: f64,
    /// Gradient Lipschitz constant: `∇²ℓ ⪰ −L·I`.
    pub l: f64,
    /// Bound on `‖P_x ∇ℓ̄_{t1−t0}(x)‖` along the path.
    pub m: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChordConfig {
    pub epsilon: f64,
    pub mu: f64,
    pub l: f64,
    pub m: f64,
    pub retraction: Retraction,
}

impl ChordConfig {
    pub fn new(epsilon: f64, mu: f64, l: f64, m: f64, retraction: Retraction) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::ConstantsInvalid(format!("epsilon = {epsilon} must be positive")));
        }
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::ConstantsInvalid(format!("mu = {mu} must be positive")));
        }
        if !(l >= mu && l.is_finite()) {
            return Err(Error::ConstantsInvalid(format!("L = {l} must be at least mu = {mu}")));
        }
        if !(m >= 0.0 && m.is_finite()) {
            return Err(Error::ConstantsInvalid(format!("M = {m} must be nonnegative")));
        }
        Ok(Self { epsilon, mu, l, m, retraction })
    }

    pub fn from_constants(epsilon: f64, c: &PathConstants, retraction: Retraction) -> Result<Self> {
        Self::new(epsilon, c.mu, c.l, c.m, retraction)
    }

    pub fn kappa(&self) -> f64 {
        self.l / self.mu
    }

    /// Multiplier increment `εμ/M`; the section moves by at most ε per step.
    pub fn delta_lambda(&self) -> f64 {
        if self.m == 0.0 {
            1.0
        } else {
            (self.epsilon * self.mu / self.m).min(1.0)
        }
    }

    pub fn outer_steps(&self) -> usize {
        (1.0 / self.delta_lambda()).ceil() as usize
    }

    /// Inner iterations per increment: enough for the contraction
    /// `(1 − 1/κ)^K ≤ 1/(4κ)`.
    pub fn inner_iters(&self) -> usize {
        let kappa = self.kappa();
        if kappa <= 1.0 {
            return 1;
        }
        ((4.0 * kappa).ln() / -(1.0 - 1.0 / kappa).ln()).ceil() as usize + 1
    }

    pub fn iteration_bound(&self) -> usize {
        self.outer_steps() * self.inner_iters()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RgdResult {
    pub point: Mat,
    pub value: f64,
    pub gradient_norm: f64,
    pub iters: usize,
}

/// Fixed-step Riemannian gradient ascent. Stops after `iters` steps or once
/// the gradient norm drops to `stop_tol`. A decrease beyond rounding means
/// the step exceeds `1/L` for this objective and is reported as an error.
pub fn rgd(family: &ObjectiveFamily, t: &[f64], x0: &Mat, step: f64, iters: usize, stop_tol: f64, retraction: Retraction) -> Result<RgdResult> {
    let spec = &family.spec;
    let mut x = x0.clone();
    let mut val = family.lagrangian_raw(t, &x)?;
    let mut g = manifolds::riemannian_gradient_at(family, t, &x)?;
    let mut done = 0;
    while done < iters && g.norm() > stop_tol {
        let y = spec.retract(&x, &(&g * step), retraction)?;
        let vy = family.lagrangian_raw(t, &y)?;
        let decrease = val - vy;
        if decrease > 1e-12 * val.abs().max(1.0) {
            return Err(Error::StepSize { iteration: done, decrease });
        }
        x = y;
        val = vy;
        g = manifolds::riemannian_gradient_at(family, t, &x)?;
        done += 1;
    }
    Ok(RgdResult { point: x, value: val, gradient_norm: g.norm(), iters: done })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PathSample {
    pub lambda: f64,
    pub t: Vec<f64>,
    pub value: f64,
    pub gradient_norm: f64,
    pub iters: usize,
    /// Iterate entries in row-major order.
    pub point: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PathResult {
    pub final_point: ManifoldPoint,
    pub samples: Vec<PathSample>,
    pub total_rgd_iters: usize,
    pub safeguard_sweeps: usize,
    pub iteration_bound: usize,
}

fn flat(x: &Mat) -> Vec<f64> {
    x.transpose().iter().copied().collect()
}

fn lerp(t0: &[f64], t1: &[f64], lambda: f64) -> Vec<f64> {
    t0.iter().zip(t1).map(|(a, b)| a + lambda * (b - a)).collect()
}

/// Tracks the maximizer from `x0 ≈ D(t0)` to `D(t1)`.
pub fn chord_track(family: &ObjectiveFamily, t0: &[f64], t1: &[f64], x0: &Mat, config: &ChordConfig) -> Result<PathResult> {
    let spec = &family.spec;
    if !spec.supports_tangent() {
        return Err(Error::UnsupportedManifold { op: "path tracking".into(), manifold: spec.name() });
    }
    if t0.len() != family.len() || t1.len() != family.len() {
        return Err(Error::ShapeMismatch(format!("multipliers must have {} entries", family.len())));
    }
    spec.check(x0, TAU_FEAS)?;
    let steps = config.outer_steps();
    let k = config.inner_iters();
    if steps as f64 * k as f64 > MAX_TOTAL_ITERS {
        return Err(Error::BudgetExhausted(format!("{steps} increments × {k} iterations exceeds the iteration budget")));
    }
    let dl = config.delta_lambda();
    let step = 1.0 / config.l;
    // Once the gradient is this small the K-step contraction is already met.
    let inner_tol = config.epsilon * config.mu / (4.0 * config.kappa());
    let mut x = x0.clone();
    let g0 = manifolds::riemannian_gradient_at(family, t0, &x)?.norm();
    let mut samples = vec![PathSample { lambda: 0.0, t: t0.to_vec(), value: family.lagrangian_raw(t0, &x)?, gradient_norm: g0, iters: 0, point: flat(&x) }];
    let mut total = 0;
    for j in 1..=steps {
        let lambda = (j as f64 * dl).min(1.0);
        let t = lerp(t0, t1, lambda);
        let r = rgd(family, &t, &x, step, k, inner_tol, config.retraction)?;
        total += r.iters;
        x = r.point;
        samples.push(PathSample { lambda, t, value: r.value, gradient_norm: r.gradient_norm, iters: r.iters, point: flat(&x) });
    }
    let accept = config.epsilon * config.mu;
    let mut sweeps = 0;
    while samples.last().is_some_and(|s| s.gradient_norm > accept) && sweeps < MAX_SAFEGUARD_SWEEPS {
        let r = rgd(family, t1, &x, step, k, inner_tol, config.retraction)?;
        total += r.iters;
        x = r.point;
        sweeps += 1;
        samples.push(PathSample { lambda: 1.0, t: t1.to_vec(), value: r.value, gradient_norm: r.gradient_norm, iters: r.iters, point: flat(&x) });
    }
    Ok(PathResult {
        final_point: ManifoldPoint::new_unchecked(spec.clone(), x),
        samples,
        total_rgd_iters: total,
        safeguard_sweeps: sweeps,
        iteration_bound: config.iteration_bound(),
    })
}

/// Estimates μ, L and M along the path from the Riemannian Hessian at
/// section points (or multistart maximizers when no section is given), with
/// safety factors 1/2 on μ and 2 on L and 3/2 on M.
pub fn estimate_constants(
    family: &ObjectiveFamily,
    t0: &[f64],
    t1: &[f64],
    samples: usize,
    section: Option<&dyn Section>,
    seed: u64,
) -> Result<PathConstants> {
    if samples < 2 {
        return Err(Error::InvalidArgument("at least two path samples are needed".into()));
    }
    let dir: Vec<f64> = t0.iter().zip(t1).map(|(a, b)| b - a).collect();
    let (mut mu, mut l, mut m) = (f64::INFINITY, 0.0f64, 0.0f64);
    for i in 0..samples {
        let lambda = i as f64 / (samples - 1) as f64;
        let t = lerp(t0, t1, lambda);
        let x = match section {
            Some(s) => s.maximize(&t)?.point.value,
            None => oracle::multistart_max_raw(family, &t, 16, seed)?.best_point.value,
        };
        let h = manifolds::hessian_matrix(family, &t, &x)?;
        let ev = linalg::sym_eigvals(&h);
        let (top, bottom) = (ev[0], ev[ev.len() - 1]);
        let scale = 1.0 + family.euclidean_gradient_raw(&t, &x)?.norm() + ev.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if top >= -1e-8 * scale {
            return Err(Error::ConstantsUnavailable(format!(
                "Hessian is not negative definite at lambda = {lambda:.4} (top eigenvalue {top:.3e})"
            )));
        }
        mu = mu.min(-top);
        l = l.max(-bottom);
        m = m.max(manifolds::riemannian_gradient_at(family, &dir, &x)?.norm());
    }
    Ok(PathConstants { mu: 0.5 * mu, l: 2.0 * l, m: 1.5 * m })
}
