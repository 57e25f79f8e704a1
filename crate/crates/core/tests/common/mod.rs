#![allow(dead_code)]

use dualsection::linalg::{self, Mat};
use dualsection::spectral::SpectralMode;
use minilp::{ComparisonOp, OptimizationDirection, Problem};
use rand::Rng;

/// Vertices of the permutohedron (eigen mode) or signed permutohedron
/// (singular mode) of `s`.
pub fn orbitope_vertices(s: &[f64], mode: SpectralMode) -> Vec<Vec<f64>> {
    let mut perms = vec![vec![]];
    for _ in 0..s.len() {
        let mut next = Vec::new();
        for p in &perms {
            for i in 0..s.len() {
                if !p.contains(&i) {
                    let mut q = p.clone();
                    q.push(i);
                    next.push(q);
                }
            }
        }
        perms = next;
    }
    let mut out = Vec::new();
    for p in perms {
        let base: Vec<f64> = p.iter().map(|&i| s[i]).collect();
        match mode {
            SpectralMode::Eigen => out.push(base),
            SpectralMode::Singular => {
                for signs in 0..(1u32 << s.len()) {
                    out.push(base.iter().enumerate().map(|(i, v)| if signs >> i & 1 == 1 { -v } else { *v }).collect());
                }
            }
        }
    }
    out
}

/// Exact convex-hull membership by LP feasibility over vertex weights.
pub fn hull_contains(vertices: &[Vec<f64>], y: &[f64]) -> bool {
    let mut p = Problem::new(OptimizationDirection::Minimize);
    let w: Vec<_> = vertices.iter().map(|_| p.add_var(0.0, (0.0, f64::INFINITY))).collect();
    p.add_constraint(w.iter().map(|&v| (v, 1.0)).collect::<Vec<_>>(), ComparisonOp::Eq, 1.0);
    for j in 0..y.len() {
        p.add_constraint(w.iter().zip(vertices).map(|(&v, vert)| (v, vert[j])).collect::<Vec<_>>(), ComparisonOp::Eq, y[j]);
    }
    p.solve().is_ok()
}

/// `max Σ pᵢaᵢ` over the simplex with `Σ pᵢbᵢ = c`: the value function of a
/// diagonal sphere QCQP.
pub fn diagonal_qcqp_value(a: &[f64], b: &[f64], c: f64) -> Option<f64> {
    let mut p = Problem::new(OptimizationDirection::Maximize);
    let w: Vec<_> = a.iter().map(|&ai| p.add_var(ai, (0.0, f64::INFINITY))).collect();
    p.add_constraint(w.iter().map(|&v| (v, 1.0)).collect::<Vec<_>>(), ComparisonOp::Eq, 1.0);
    p.add_constraint(w.iter().zip(b).map(|(&v, &bi)| (v, bi)).collect::<Vec<_>>(), ComparisonOp::Eq, c);
    p.solve().ok().map(|s| s.objective())
}

pub fn unit_sym<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Mat {
    linalg::unit_frobenius(linalg::gaussian_sym(n, rng))
}

pub fn unit_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Mat {
    let g = linalg::gaussian(n, 1, rng);
    &g / g.norm()
}

/// Sign-aligned distance between unit vectors.
pub fn aligned_distance(x: &Mat, y: &Mat) -> f64 {
    (x - y).norm().min((x + y).norm())
}
