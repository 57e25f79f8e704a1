mod common;

use common::{diagonal_qcqp_value, unit_sym};
use dualsection::chord::{self, ChordConfig};
use dualsection::dual_ellipsoid::{self, DualOptions, PolarQuery};
use dualsection::lagrangian::{Component, MultiplierVector, ObjectiveFamily};
use dualsection::linalg::{self, Mat, Vector};
use dualsection::manifolds::{self, ManifoldSpec, Retraction};
use dualsection::oracle;
use dualsection::procrustes::{self, UppInstance};
use dualsection::sections::{self, LiepSection, Section, TrustRegionSection};
use dualsection::spectral::{self, SpectralMode};
use proptest::prelude::*;
use rand::Rng;

const RETRACTIONS: [Retraction; 3] = [Retraction::Qr, Retraction::MetricProjection, Retraction::Exponential];

fn manifold() -> impl Strategy<Value = ManifoldSpec> {
    prop_oneof![
        (2usize..6).prop_map(|n| ManifoldSpec::Sphere { n }),
        (2usize..6, 1usize..4).prop_filter_map("m ≤ n", |(n, m)| (m <= n).then_some(ManifoldSpec::Stiefel { n, m })),
        (2usize..5, 1usize..3).prop_filter_map("m < n", |(n, m)| (m < n).then_some(ManifoldSpec::Grassmannian { n, m })),
    ]
}

fn quadratic_family(spec: &ManifoldSpec, k: usize, seed: u64) -> ObjectiveFamily {
    let mut rng = linalg::rng(seed);
    let (n, _) = spec.ambient_shape();
    let comps = (0..=k)
        .map(|_| match spec {
            ManifoldSpec::Sphere { .. } => Component::SphereQuadratic { matrix: unit_sym(n, &mut rng) },
            ManifoldSpec::Grassmannian { .. } => Component::LinearTrace { matrix: unit_sym(n, &mut rng) },
            _ => Component::StiefelGram { matrix: unit_sym(n, &mut rng) },
        })
        .collect();
    ObjectiveFamily::new(spec.clone(), comps).unwrap()
}

fn random_t(k: usize, seed: u64) -> Vec<f64> {
    let mut rng = linalg::rng(seed ^ 0x5eed);
    let mut t: Vec<f64> = linalg::gaussian(k + 1, 1, &mut rng).iter().copied().collect();
    t[0] = t[0].abs() + 0.5;
    t
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn retraction_stays_on_manifold(spec in manifold(), seed in any::<u64>(), scale in 0.0f64..3.0) {
        let mut rng = linalg::rng(seed);
        let x = spec.random_point_rng(&mut rng);
        let v = spec.random_tangent(&x, &mut rng).unwrap() * scale;
        for mode in RETRACTIONS {
            if let Ok(y) = spec.retract(&x, &v, mode) {
                prop_assert!(spec.check(&y, 1e-10).is_ok(), "{mode:?} left {}", spec.name());
            }
        }
        // Every manifold supports at least the default retraction.
        prop_assert!(spec.retract(&x, &v, Retraction::Qr).is_ok() || spec.retract(&x, &v, Retraction::MetricProjection).is_ok());
    }

    #[test]
    fn projection_is_idempotent_and_tangent(spec in manifold(), seed in any::<u64>()) {
        let mut rng = linalg::rng(seed);
        let x = spec.random_point_rng(&mut rng);
        let (r, c) = spec.ambient_shape();
        let v = linalg::gaussian(r, c, &mut rng);
        let p = spec.project(&x, &v).unwrap();
        let pp = spec.project(&x, &p).unwrap();
        prop_assert!((&pp - &p).norm() <= 1e-12 * (1.0 + v.norm()));
        // The residual v − Pv is normal: orthogonal to every tangent basis vector.
        let normal = &v - &p;
        for b in spec.tangent_basis(&x).unwrap() {
            prop_assert!(linalg::inner(&normal, &b).abs() <= 1e-10 * (1.0 + v.norm()));
        }
    }

    #[test]
    fn gradient_matches_finite_difference(spec in manifold(), seed in any::<u64>(), k in 0usize..3) {
        let fam = quadratic_family(&spec, k, seed);
        let t = random_t(k, seed);
        let mut rng = linalg::rng(seed.wrapping_add(1));
        let x = spec.random_point_rng(&mut rng);
        let v = spec.random_tangent(&x, &mut rng).unwrap();
        let g = manifolds::riemannian_gradient_at(&fam, &t, &x).unwrap();
        let h = 1e-5;
        let fp = fam.lagrangian_raw(&t, &spec.retract(&x, &(&v * h), Retraction::MetricProjection).unwrap()).unwrap();
        let fm = fam.lagrangian_raw(&t, &spec.retract(&x, &(&v * -h), Retraction::MetricProjection).unwrap()).unwrap();
        let fd = (fp - fm) / (2.0 * h);
        prop_assert!((fd - linalg::inner(&g, &v)).abs() <= 1e-6 * (1.0 + g.norm() * v.norm()), "fd {fd} vs {}", linalg::inner(&g, &v));
    }

    #[test]
    fn hessian_is_symmetric(spec in manifold(), seed in any::<u64>()) {
        let fam = quadratic_family(&spec, 1, seed);
        let t = random_t(1, seed);
        let x = spec.random_point_rng(&mut linalg::rng(seed));
        let h = manifolds::hessian_matrix(&fam, &t, &x).unwrap();
        prop_assert!((&h - h.transpose()).norm() <= 1e-5 * (1.0 + h.norm()));
    }

    #[test]
    fn lagrangian_is_linear_in_t(spec in manifold(), seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let fam = quadratic_family(&spec, 2, seed);
        let x = spec.random_point_rng(&mut linalg::rng(seed));
        let (t, s) = (random_t(2, seed), random_t(2, seed.wrapping_add(9)));
        let mix: Vec<f64> = t.iter().zip(&s).map(|(p, q)| a * p + b * q).collect();
        let lhs = fam.lagrangian_raw(&mix, &x).unwrap();
        let rhs = a * fam.lagrangian_raw(&t, &x).unwrap() + b * fam.lagrangian_raw(&s, &x).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
    }

    #[test]
    fn multiplier_validation(mut v in prop::collection::vec(-10.0f64..10.0, 1..5)) {
        v[0] = v[0].abs();
        let t = MultiplierVector::new(v.clone()).unwrap();
        prop_assert_eq!(t.t, v);
        prop_assert!(MultiplierVector::new(vec![]).is_err());
        prop_assert!(MultiplierVector::new(vec![1.0, f64::NAN]).is_err());
        prop_assert!(MultiplierVector::new(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn liep_section_dominates_and_is_scale_covariant(seed in any::<u64>(), alpha in 0.1f64..10.0) {
        let mut rng = linalg::rng(seed);
        let n = 4;
        let a: Vec<Mat> = (0..3).map(|_| unit_sym(n, &mut rng)).collect();
        let lambda = vec![2.0, 1.0, 0.5, -1.0];
        let sec = LiepSection::new(a.clone(), lambda.clone()).unwrap();
        let fam = sec.family().clone();
        let t = random_t(2, seed);
        let d = sec.maximize(&t).unwrap();
        let spec = ManifoldSpec::FixedEigenvalues { lambda };
        for _ in 0..200 {
            let x = spec.random_point_rng(&mut rng);
            prop_assert!(fam.lagrangian_raw(&t, &x).unwrap() <= d.lagrangian_value + 1e-10);
        }
        let ts: Vec<f64> = t.iter().map(|v| v * alpha).collect();
        let ds = sec.maximize(&ts).unwrap();
        prop_assert!((ds.lagrangian_value - alpha * d.lagrangian_value).abs() <= 1e-9 * (1.0 + ds.lagrangian_value.abs()));
        if d.uniqueness_gap > 1e-6 {
            prop_assert!((&ds.point.value - &d.point.value).norm() <= 1e-7);
        }
    }

    #[test]
    fn trust_region_section_is_stationary(seed in any::<u64>(), n in 2usize..6) {
        let mut rng = linalg::rng(seed);
        let a = unit_sym(n, &mut rng);
        let b = linalg::gaussian(n, 1, &mut rng);
        let sec = TrustRegionSection::new(a, Vector::from_column_slice(b.as_slice())).unwrap();
        let t = random_t(1, seed);
        let d = sec.maximize(&t).unwrap();
        let g = manifolds::riemannian_gradient_at(sec.family(), &t, &d.point.value).unwrap();
        prop_assert!(g.norm() <= 1e-7 * (1.0 + t.iter().map(|v| v.abs()).sum::<f64>()), "grad {}", g.norm());
        let spec = ManifoldSpec::Sphere { n };
        for _ in 0..200 {
            let x = spec.random_point_rng(&mut rng);
            prop_assert!(sec.family().lagrangian_raw(&t, &x).unwrap() <= d.lagrangian_value + 1e-10);
        }
    }

    #[test]
    fn schur_horn_contains_diagonals(seed in any::<u64>(), n in 1usize..6) {
        let mut rng = linalg::rng(seed);
        let lambda: Vec<f64> = linalg::gaussian(n, 1, &mut rng).iter().copied().collect();
        let spec = ManifoldSpec::FixedEigenvalues { lambda: lambda.clone() };
        let x = spec.random_point_rng(&mut rng);
        let diag: Vec<f64> = (0..n).map(|i| x[(i, i)]).collect();
        prop_assert!(spectral::orbitope_membership(&diag, &lambda, SpectralMode::Eigen).unwrap().inside);
        // Shifting the trace leaves the permutohedron.
        let shifted: Vec<f64> = diag.iter().map(|v| v + 1e-3).collect();
        prop_assert!(!spectral::orbitope_membership(&shifted, &lambda, SpectralMode::Eigen).unwrap().inside);
    }

    #[test]
    fn singular_membership_contains_diagonals(seed in any::<u64>()) {
        let mut rng = linalg::rng(seed);
        let sigma = vec![2.0, 0.7];
        let spec = ManifoldSpec::FixedSingularValues { n: 4, m: 2, sigma: sigma.clone() };
        let x = spec.random_point_rng(&mut rng);
        let diag = vec![x[(0, 0)], x[(1, 1)]];
        prop_assert!(spectral::orbitope_membership(&diag, &sigma, SpectralMode::Singular).unwrap().inside);
        prop_assert!(!spectral::orbitope_membership(&[2.1, 0.0], &sigma, SpectralMode::Singular).unwrap().inside);
    }

    #[test]
    fn noncrossing_gap_is_scale_invariant(seed in any::<u64>(), alpha in 0.2f64..5.0) {
        let mut rng = linalg::rng(seed);
        let a: Vec<Mat> = (0..2).map(|_| unit_sym(4, &mut rng)).collect();
        let scaled: Vec<Mat> = a.iter().map(|m| m * alpha).collect();
        let c1 = spectral::min_gap_on_span(&a, 1, SpectralMode::Eigen, 8, seed).unwrap();
        let c2 = spectral::min_gap_on_span(&scaled, 1, SpectralMode::Eigen, 8, seed).unwrap();
        prop_assert_eq!(c1.verdict, c2.verdict);
        prop_assert!((c2.min_gap - alpha * c1.min_gap).abs() <= 1e-6 * (1.0 + c2.min_gap.abs()));
    }

    #[test]
    fn upp_objective_equivalence(seed in any::<u64>(), d in 3usize..20) {
        let mut rng = linalg::rng(seed);
        let inst = UppInstance::new(linalg::gaussian(3, d, &mut rng), linalg::gaussian(2, d, &mut rng)).unwrap();
        let tr = procrustes::transform(&inst);
        let fam = procrustes::upp_family(&tr.a, &tr.b).unwrap();
        let x = linalg::random_stiefel(3, 2, &mut rng);
        let via_family = tr.offset - fam.lagrangian_raw(&[1.0, 1.0], &x).unwrap();
        prop_assert!((inst.objective(&x) - via_family).abs() <= 1e-9 * (1.0 + via_family.abs()));
        // The canonical rotation preserves Lagrangian values.
        if let Ok(c) = procrustes::canonicalize(&tr.a, &tr.b) {
            let cf = procrustes::upp_family(&c.a, &c.b).unwrap();
            let xc = c.to_canonical(&x);
            let t = [1.0, 0.7];
            prop_assert!((cf.lagrangian_raw(&t, &xc).unwrap() - fam.lagrangian_raw(&t, &x).unwrap()).abs() <= 1e-9 * (1.0 + via_family.abs()));
            prop_assert!((c.to_original(&xc) - &x).norm() <= 1e-12);
        }
    }

    #[test]
    fn oracle_is_reproducible(seed in any::<u64>()) {
        let spec = ManifoldSpec::Stiefel { n: 4, m: 2 };
        let fam = quadratic_family(&spec, 1, seed);
        let t = random_t(1, seed);
        let a = oracle::multistart_max_raw(&fam, &t, 6, seed).unwrap();
        let b = oracle::multistart_max_raw(&fam, &t, 6, seed).unwrap();
        prop_assert_eq!(a.best_value.to_bits(), b.best_value.to_bits());
        prop_assert_eq!(a.best_point.value, b.best_point.value);
    }

    #[test]
    fn ellipsoid_cut_keeps_halfspace_and_shrinks(seed in any::<u64>(), n in 2usize..6, depth in -0.4f64..0.9) {
        let mut rng = linalg::rng(seed);
        let c = Vector::from_column_slice(linalg::gaussian(n, 1, &mut rng).as_slice());
        let l = linalg::gaussian(n, n, &mut rng) + Mat::identity(n, n) * 2.0;
        let p = &l * l.transpose();
        let a = Vector::from_column_slice(linalg::gaussian(n, 1, &mut rng).as_slice());
        let s = a.dot(&(&p * &a)).sqrt();
        let b = a.dot(&c) - depth * s;
        let (nc, np, pred) = dual_ellipsoid::ellipsoid_step(&c, &p, &a, b).unwrap();
        let actual = np.determinant().ln() - p.determinant().ln();
        prop_assert!((actual - pred).abs() <= 1e-8 * (1.0 + pred.abs()));
        if depth > -1.0 / n as f64 {
            prop_assert!(pred < 0.0, "pred {pred}");
        }
        if depth >= 0.0 {
            prop_assert!(pred <= -1.0 / (n as f64 + 1.0) + 1e-12, "pred {pred}");
        }
        // Points of the old ellipsoid inside the halfspace stay inside the new one.
        let npi = np.clone().try_inverse().unwrap();
        let (evals, evecs) = linalg::sym_eig(&p);
        for _ in 0..200 {
            let u = Vector::from_column_slice(linalg::gaussian(n, 1, &mut rng).as_slice());
            let r = rng.random::<f64>().powf(1.0 / n as f64);
            let z = &c + &evecs * Vector::from_iterator(n, evals.iter().zip(u.normalize().iter()).map(|(e, v)| e.sqrt() * v)) * r;
            if a.dot(&z) <= b {
                let q = (&z - &nc).dot(&(&npi * (&z - &nc)));
                prop_assert!(q <= 1.0 + 1e-9, "q {q}");
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn dual_value_upper_bounds_and_matches_diagonal_qcqp(seed in any::<u64>()) {
        let mut rng = linalg::rng(seed);
        let a: Vec<f64> = (0..3).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
        let b: Vec<f64> = (0..3).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
        let (lo, hi) = b.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
        prop_assume!(hi - lo > 0.5);
        let c = lo + (hi - lo) * (0.25 + 0.5 * rng.random::<f64>());
        let fam = ObjectiveFamily::new(
            ManifoldSpec::Sphere { n: 3 },
            vec![Component::SphereQuadratic { matrix: linalg::diag(&a) }, Component::SphereQuadratic { matrix: linalg::diag(&b) }],
        ).unwrap();
        let sec = sections::section_for(&fam, 8, seed).unwrap();
        let r = dual_ellipsoid::solve(sec.as_ref(), &[c], &DualOptions { seed, ..DualOptions::default() }).unwrap();
        let lp = diagonal_qcqp_value(&a, &b, c).unwrap();
        prop_assert!(r.dual_value >= lp - 1e-6, "weak duality {} < {lp}", r.dual_value);
        prop_assert!((r.dual_value - lp).abs() <= 1e-5, "dual {} vs lp {lp}", r.dual_value);
    }

    #[test]
    fn separation_oracle_cuts_are_valid(seed in any::<u64>()) {
        let mut rng = linalg::rng(seed);
        let fam = ObjectiveFamily::new(
            ManifoldSpec::Sphere { n: 3 },
            vec![Component::SphereQuadratic { matrix: unit_sym(3, &mut rng) }, Component::SphereQuadratic { matrix: unit_sym(3, &mut rng) }],
        ).unwrap();
        let sec = sections::section_for(&fam, 8, seed).unwrap();
        let rc = dual_ellipsoid::recenter(sec.as_ref(), 48, seed).unwrap();
        for _ in 0..10 {
            let t: Vec<f64> = linalg::gaussian(2, 1, &mut rng).iter().map(|v| v * 5.0).collect();
            match dual_ellipsoid::separation_oracle(sec.as_ref(), &rc, &t).unwrap() {
                PolarQuery::Inside { support } => prop_assert!(support <= 1.0),
                PolarQuery::Violated { y, support } => {
                    // y lies in the recentered image and strictly separates t.
                    let ty: f64 = t.iter().zip(&y).map(|(a, b)| a * b).sum();
                    prop_assert!(support > 1.0);
                    prop_assert!((ty - support).abs() <= 1e-9 * (1.0 + support));
                }
            }
        }
    }

    #[test]
    fn chord_path_is_valid(seed in any::<u64>()) {
        // f₀ = xᵀAx with a clear top eigengap, f₁ a small perturbation.
        let mut rng = linalg::rng(seed);
        let a = linalg::diag(&[3.0, 1.0, 0.0]);
        let b = unit_sym(3, &mut rng) * 0.5;
        let fam = ObjectiveFamily::new(
            ManifoldSpec::Sphere { n: 3 },
            vec![Component::SphereQuadratic { matrix: a }, Component::SphereQuadratic { matrix: b }],
        ).unwrap();
        let sec = sections::section_for(&fam, 8, seed).unwrap();
        let (t0, t1) = ([1.0, 0.0], [1.0, 1.0]);
        let consts = chord::estimate_constants(&fam, &t0, &t1, 11, Some(sec.as_ref()), seed).unwrap();
        let cfg = ChordConfig::from_constants(0.05, &consts, Retraction::Qr).unwrap();
        let x0 = sec.maximize(&t0).unwrap().point.value;
        let path = chord::chord_track(&fam, &t0, &t1, &x0, &cfg).unwrap();
        let spec = ManifoldSpec::Sphere { n: 3 };
        let mut last = 0.0;
        for s in &path.samples {
            prop_assert!(s.lambda >= last);
            last = s.lambda;
            let x = Mat::from_row_slice(3, 1, &s.point);
            prop_assert!(spec.check(&x, 1e-10).is_ok());
        }
        let end = path.samples.last().unwrap();
        prop_assert_eq!(end.lambda, 1.0);
        prop_assert!(end.gradient_norm <= cfg.epsilon * cfg.mu, "grad {}", end.gradient_norm);
        prop_assert!(path.total_rgd_iters <= path.iteration_bound + path.safeguard_sweeps * cfg.inner_iters());
        let target = sec.maximize(&t1).unwrap();
        // Within ε of D(t1), so the value is within L·ε²/2 of the maximum.
        let slack = 0.5 * cfg.l * cfg.epsilon * cfg.epsilon;
        prop_assert!(fam.lagrangian_raw(&t1, &path.final_point.value).unwrap() >= target.lagrangian_value - slack);
    }

    #[test]
    fn grid_bound_covers_ascent(seed in any::<u64>()) {
        let mut rng = linalg::rng(seed);
        let q = unit_sym(3, &mut rng);
        let w = Vector::from_column_slice(linalg::gaussian(3, 1, &mut rng).as_slice());
        let g = oracle::grid_search_projective(&q, 0.0, &w, 100).unwrap();
        // With c = 0 the maximum is the top eigenvalue.
        let top = linalg::sym_eigvals(&q).max();
        prop_assert!(g.max <= top + 1e-12);
        prop_assert!(top - g.max <= g.bound);
    }
}

#[test]
fn section_for_picks_closed_forms() {
    let mut rng = linalg::rng(1);
    let liep = ObjectiveFamily::new(
        ManifoldSpec::FixedEigenvalues { lambda: vec![1.0, 0.0, 0.0] },
        vec![Component::LinearTrace { matrix: unit_sym(3, &mut rng) }, Component::LinearTrace { matrix: unit_sym(3, &mut rng) }],
    )
    .unwrap();
    let s = sections::section_for(&liep, 4, 0).unwrap();
    assert!(s.maximize(&[1.0, 0.3]).unwrap().uniqueness_gap.is_finite());
    // All-linear Stiefel families go through the singular-value section.
    let stiefel = ObjectiveFamily::new(
        ManifoldSpec::Stiefel { n: 4, m: 2 },
        vec![Component::LinearTrace { matrix: linalg::gaussian(4, 2, &mut rng) }, Component::LinearTrace { matrix: linalg::gaussian(4, 2, &mut rng) }],
    )
    .unwrap();
    let s = sections::section_for(&stiefel, 4, 0).unwrap();
    let d = s.maximize(&[1.0, -0.4]).unwrap();
    let m = oracle::multistart_max_raw(&stiefel, &[1.0, -0.4], 16, 0).unwrap();
    assert!((d.lagrangian_value - m.best_value).abs() < 1e-7);
    assert!(ManifoldSpec::Stiefel { n: 4, m: 2 }.check(&d.point.value, 1e-10).is_ok());
}

#[test]
fn recover_primal_rejects_nonpositive_t0() {
    let fam = ObjectiveFamily::new(
        ManifoldSpec::Sphere { n: 3 },
        vec![Component::SphereQuadratic { matrix: linalg::diag(&[3.0, 1.0, 0.0]) }, Component::SphereQuadratic { matrix: linalg::diag(&[1.0, 2.0, 3.0]) }],
    )
    .unwrap();
    let sec = sections::section_for(&fam, 4, 0).unwrap();
    assert!(dual_ellipsoid::recover_primal(sec.as_ref(), &[0.0, 1.0], None, 1e-9).is_err());
    assert!(dual_ellipsoid::recover_primal(sec.as_ref(), &[1.0, 0.2], Some((1.0, 2.0)), 1e-6).is_ok());
}

#[test]
fn thin_image_recenters_inside() {
    // A thin triangle whose third vertex has a narrow normal cone: random
    // directions may sample only two vertices.
    let a = [-0.25030390532410607, 0.039879826427543286, -0.6411073702141574];
    let b = [0.46619665454158676, 1.1692182428083453, -0.5038242664344033];
    let c = 0.2838149458136763;
    let fam = ObjectiveFamily::new(
        ManifoldSpec::Sphere { n: 3 },
        vec![Component::SphereQuadratic { matrix: linalg::diag(&a) }, Component::SphereQuadratic { matrix: linalg::diag(&b) }],
    )
    .unwrap();
    let sec = sections::section_for(&fam, 8, 0).unwrap();
    let r = dual_ellipsoid::solve(sec.as_ref(), &[c], &DualOptions { seed: 2248659079240326660, ..DualOptions::default() }).unwrap();
    let lp = diagonal_qcqp_value(&a, &b, c).unwrap();
    assert!((r.dual_value - lp).abs() < 1e-7, "dual {} vs {lp}", r.dual_value);
}
