//! Embedded matrix manifolds: feasibility, tangent projection, retractions,
//! Riemannian gradients and Hessian-vector products.
//!
//! Every point is stored as a dense ambient matrix; sphere points are n×1
//! columns. Grassmannian points are rank-m orthogonal projectors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lagrangian::{MultiplierVector, ObjectiveFamily};
use crate::linalg::{self, Mat, Vector};

/// Default feasibility tolerance for points and tangent vectors.
pub const TAU_FEAS: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ManifoldSpec {
    Sphere { n: usize },
    Stiefel { n: usize, m: usize },
    Grassmannian { n: usize, m: usize },
    FixedEigenvalues { lambda: Vec<f64> },
    FixedSingularValues { n: usize, m: usize, sigma: Vec<f64> },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Retraction {
    MetricProjection,
    #[default]
    Qr,
    Exponential,
}

impl std::str::FromStr for Retraction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "qr" => Ok(Retraction::Qr),
            "exp" | "exponential" => Ok(Retraction::Exponential),
            "metric" | "metric-projection" | "projection" => Ok(Retraction::MetricProjection),
            other => Err(Error::InvalidArgument(format!("unknown retraction `{other}`"))),
        }
    }
}

impl ManifoldSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidManifold(msg));
        match self {
            ManifoldSpec::Sphere { n } if *n == 0 => bad("sphere needs n >= 1".into()),
            ManifoldSpec::Stiefel { n, m } | ManifoldSpec::Grassmannian { n, m }
                if *m == 0 || n < m =>
            {
                bad(format!("{} needs n >= m >= 1", self.name()))
            }
            ManifoldSpec::FixedEigenvalues { lambda } => {
                if lambda.is_empty() {
                    return bad("empty eigenvalue vector".into());
                }
                if lambda.windows(2).any(|w| w[0] < w[1]) {
                    return bad("eigenvalues must be sorted descending".into());
                }
                Ok(())
            }
            ManifoldSpec::FixedSingularValues { n, m, sigma } => {
                if *m == 0 || n < m {
                    return bad("fixed singular values need n >= m >= 1".into());
                }
                if sigma.len() != *m {
                    return bad(format!("expected {m} singular values, got {}", sigma.len()));
                }
                if sigma.windows(2).any(|w| w[0] < w[1]) || sigma.iter().any(|&s| s < 0.0) {
                    return bad("singular values must be nonnegative and descending".into());
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> String {
        match self {
            ManifoldSpec::Sphere { n } => format!("Sphere({n})"),
            ManifoldSpec::Stiefel { n, m } => format!("Stiefel({n},{m})"),
            ManifoldSpec::Grassmannian { n, m } => format!("Grassmannian({n},{m})"),
            ManifoldSpec::FixedEigenvalues { lambda } => format!("FixedEigenvalues({lambda:?})"),
            ManifoldSpec::FixedSingularValues { n, m, sigma } => {
                format!("FixedSingularValues({n},{m},{sigma:?})")
            }
        }
    }

    pub fn ambient_shape(&self) -> (usize, usize) {
        match self {
            ManifoldSpec::Sphere { n } => (*n, 1),
            ManifoldSpec::Stiefel { n, m } | ManifoldSpec::FixedSingularValues { n, m, .. } => {
                (*n, *m)
            }
            ManifoldSpec::Grassmannian { n, .. } => (*n, *n),
            ManifoldSpec::FixedEigenvalues { lambda } => (lambda.len(), lambda.len()),
        }
    }

    /// Whether tangent projection, retraction and gradient methods are available.
    pub fn supports_tangent(&self) -> bool {
        matches!(
            self,
            ManifoldSpec::Sphere { .. } | ManifoldSpec::Stiefel { .. } | ManifoldSpec::Grassmannian { .. }
        )
    }

    fn unsupported(&self, op: &str) -> Error {
        Error::UnsupportedManifold { op: op.into(), manifold: self.name() }
    }

    /// Intrinsic dimension.
    pub fn dimension(&self) -> Option<usize> {
        match self {
            ManifoldSpec::Sphere { n } => Some(n - 1),
            ManifoldSpec::Stiefel { n, m } => Some(n * m - m * (m + 1) / 2),
            ManifoldSpec::Grassmannian { n, m } => Some(m * (n - m)),
            _ => None,
        }
    }

    /// Largest constraint violation at `x`, with the name of the constraint.
    pub fn residual(&self, x: &Mat) -> Result<(&'static str, f64)> {
        let shape = self.ambient_shape();
        if x.shape() != shape {
            return Err(Error::ShapeMismatch(format!(
                "{} expects a {}x{} point, got {}x{}",
                self.name(),
                shape.0,
                shape.1,
                x.nrows(),
                x.ncols()
            )));
        }
        Ok(match self {
            ManifoldSpec::Sphere { .. } => ("unit norm", (x.norm() - 1.0).abs()),
            ManifoldSpec::Stiefel { m, .. } => {
                ("orthonormal columns", (x.transpose() * x - Mat::identity(*m, *m)).norm())
            }
            ManifoldSpec::Grassmannian { m, .. } => {
                let sym_res = (x - x.transpose()).norm();
                let idem = (x * x - x).norm();
                let tr = (x.trace() - *m as f64).abs();
                if sym_res >= idem && sym_res >= tr {
                    ("projector symmetry", sym_res)
                } else if idem >= tr {
                    ("projector idempotence", idem)
                } else {
                    ("projector trace", tr)
                }
            }
            ManifoldSpec::FixedEigenvalues { lambda } => {
                let sym_res = (x - x.transpose()).norm();
                let ev = linalg::sym_eigvals(x);
                let spec_res = ev.iter().zip(lambda).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                if sym_res > spec_res {
                    ("symmetry", sym_res)
                } else {
                    ("eigenvalues", spec_res)
                }
            }
            ManifoldSpec::FixedSingularValues { sigma, .. } => {
                let sv = linalg::singular_values(x);
                ("singular values", sv.iter().zip(sigma).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())))
            }
        })
    }

    pub fn check(&self, x: &Mat, tol: f64) -> Result<()> {
        let (constraint, residual) = self.residual(x)?;
        if residual > tol || !residual.is_finite() {
            return Err(Error::Infeasible { constraint: constraint.into(), residual, tolerance: tol });
        }
        Ok(())
    }

    /// Orthogonal projection onto the tangent space, evaluated by the
    /// algebraic formula. The formula is smooth in `x` and is also used at
    /// points slightly off the manifold.
    pub fn project(&self, x: &Mat, v: &Mat) -> Result<Mat> {
        match self {
            ManifoldSpec::Sphere { .. } => {
                let c = x.dot(v);
                Ok(v - x * c)
            }
            ManifoldSpec::Stiefel { .. } => Ok(v - x * linalg::sym(&(x.transpose() * v))),
            ManifoldSpec::Grassmannian { n, .. } => {
                let s = linalg::sym(v);
                let q = Mat::identity(*n, *n) - x;
                Ok(x * &s * &q + &q * &s * x)
            }
            _ => Err(self.unsupported("tangent projection")),
        }
    }

    pub fn retract(&self, x: &Mat, v: &Mat, mode: Retraction) -> Result<Mat> {
        match (self, mode) {
            (ManifoldSpec::Sphere { .. }, Retraction::Exponential) => {
                let nv = v.norm();
                if nv == 0.0 {
                    return Ok(x.clone());
                }
                Ok(x * nv.cos() + v * (nv.sin() / nv))
            }
            (ManifoldSpec::Sphere { .. }, _) => {
                let y = x + v;
                let ny = y.norm();
                if ny == 0.0 {
                    return Err(Error::Numerical { message: "retraction through the origin".into(), residual: 0.0 });
                }
                Ok(y / ny)
            }
            (ManifoldSpec::Stiefel { .. }, Retraction::Qr) => Ok(linalg::qf(&(x + v))),
            (ManifoldSpec::Stiefel { .. }, Retraction::MetricProjection) => Ok(linalg::polar(&(x + v))),
            (ManifoldSpec::Stiefel { m, .. }, Retraction::Exponential) => Ok(stiefel_exp(x, v, *m)),
            (ManifoldSpec::Grassmannian { m, .. }, Retraction::MetricProjection) => {
                let q = linalg::top_eigvecs(&linalg::sym(&(x + v)), *m);
                Ok(&q * q.transpose())
            }
            (ManifoldSpec::Grassmannian { m, .. }, Retraction::Qr) => {
                let x0 = linalg::top_eigvecs(x, *m);
                let q = linalg::qf(&(&x0 + v * &x0));
                Ok(&q * q.transpose())
            }
            (ManifoldSpec::Grassmannian { m, .. }, Retraction::Exponential) => {
                let x0 = linalg::top_eigvecs(x, *m);
                let h = v * &x0;
                let (u, s, w) = linalg::svd(&h);
                let cos = Mat::from_diagonal(&s.map(f64::cos));
                let sin = Mat::from_diagonal(&s.map(f64::sin));
                let y = &x0 * &w * cos * w.transpose() + u * sin * w.transpose();
                let q = linalg::qf(&y);
                Ok(&q * q.transpose())
            }
            _ => Err(Error::UnsupportedRetraction { mode: format!("{mode:?}"), manifold: self.name() }),
        }
    }

    /// Orthonormal basis of T_x M as ambient matrices.
    pub fn tangent_basis(&self, x: &Mat) -> Result<Vec<Mat>> {
        let (r, c) = self.ambient_shape();
        let big = r * c;
        let dim = self.dimension().ok_or_else(|| self.unsupported("tangent basis"))?;
        let mut p = Mat::zeros(big, big);
        for k in 0..big {
            let mut e = Mat::zeros(r, c);
            e[(k % r, k / r)] = 1.0;
            let pe = self.project(x, &e)?;
            p.set_column(k, &Vector::from_column_slice(pe.as_slice()));
        }
        let (_, vecs) = linalg::sym_eig(&p);
        Ok((0..dim)
            .map(|k| Mat::from_column_slice(r, c, vecs.column(k).as_slice()))
            .collect())
    }

    pub fn random_point_rng<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Mat {
        match self {
            ManifoldSpec::Sphere { n } => {
                let g = linalg::gaussian(*n, 1, rng);
                let nrm = g.norm();
                g / nrm
            }
            ManifoldSpec::Stiefel { n, m } => linalg::random_stiefel(*n, *m, rng),
            ManifoldSpec::Grassmannian { n, m } => {
                let q = linalg::random_stiefel(*n, *m, rng);
                &q * q.transpose()
            }
            ManifoldSpec::FixedEigenvalues { lambda } => {
                let q = linalg::random_orthogonal(lambda.len(), rng);
                &q * linalg::diag(lambda) * q.transpose()
            }
            ManifoldSpec::FixedSingularValues { n, m, sigma } => {
                let u = linalg::random_stiefel(*n, *m, rng);
                let v = linalg::random_orthogonal(*m, rng);
                u * linalg::diag(sigma) * v.transpose()
            }
        }
    }

    /// Random tangent vector at `x` with unit Frobenius norm.
    pub fn random_tangent<R: rand::Rng + ?Sized>(&self, x: &Mat, rng: &mut R) -> Result<Mat> {
        let (r, c) = self.ambient_shape();
        let v = self.project(x, &linalg::gaussian(r, c, rng))?;
        let nv = v.norm();
        Ok(if nv > 0.0 { v / nv } else { v })
    }
}

fn stiefel_exp(x: &Mat, v: &Mat, m: usize) -> Mat {
    let a = x.transpose() * v;
    let s = v.transpose() * v;
    let mut blk = Mat::zeros(2 * m, 2 * m);
    blk.view_mut((0, 0), (m, m)).copy_from(&a);
    blk.view_mut((0, m), (m, m)).copy_from(&(-s));
    blk.view_mut((m, 0), (m, m)).copy_from(&Mat::identity(m, m));
    blk.view_mut((m, m), (m, m)).copy_from(&a);
    let e = blk.exp();
    let mut xv = Mat::zeros(x.nrows(), 2 * m);
    xv.view_mut((0, 0), (x.nrows(), m)).copy_from(x);
    xv.view_mut((0, m), (x.nrows(), m)).copy_from(v);
    let left = xv * e.columns(0, m);
    let y = left * (-a).exp();
    // Restore orthonormality lost to rounding in the matrix exponentials.
    linalg::qf(&y)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifoldPoint {
    pub spec: ManifoldSpec,
    #[serde(with = "crate::io::rowmajor")]
    pub value: Mat,
}

impl ManifoldPoint {
    /// Validated constructor: the point must satisfy the constraints to `TAU_FEAS`.
    pub fn new(spec: ManifoldSpec, value: Mat) -> Result<Self> {
        spec.validate()?;
        spec.check(&value, TAU_FEAS)?;
        Ok(Self { spec, value })
    }

    pub fn new_unchecked(spec: ManifoldSpec, value: Mat) -> Self {
        Self { spec, value }
    }
}

#[derive(Clone, Debug)]
pub struct TangentVector {
    pub base: ManifoldPoint,
    pub direction: Mat,
}

pub fn project_tangent(spec: &ManifoldSpec, x: &ManifoldPoint, v: &Mat) -> Result<TangentVector> {
    spec.check(&x.value, TAU_FEAS)?;
    let direction = spec.project(&x.value, v)?;
    Ok(TangentVector { base: x.clone(), direction })
}

pub fn retract(spec: &ManifoldSpec, x: &ManifoldPoint, v: &TangentVector, mode: Retraction) -> Result<ManifoldPoint> {
    let value = spec.retract(&x.value, &v.direction, mode)?;
    Ok(ManifoldPoint::new_unchecked(spec.clone(), value))
}

pub fn random_point(spec: &ManifoldSpec, seed: u64) -> ManifoldPoint {
    let mut rng = linalg::rng(seed);
    ManifoldPoint::new_unchecked(spec.clone(), spec.random_point_rng(&mut rng))
}

/// `P_x ∇ℓ̄_t(x)` on raw matrices; `t` may be any coefficient vector.
pub fn riemannian_gradient_at(family: &ObjectiveFamily, t: &[f64], x: &Mat) -> Result<Mat> {
    let g = family.euclidean_gradient_raw(t, x)?;
    family.spec.project(x, &g)
}

pub fn riemannian_gradient(family: &ObjectiveFamily, t: &MultiplierVector, x: &ManifoldPoint) -> Result<TangentVector> {
    if family.spec != x.spec {
        return Err(Error::ShapeMismatch(format!(
            "family lives on {} but the point is on {}",
            family.spec.name(),
            x.spec.name()
        )));
    }
    family.spec.check(&x.value, TAU_FEAS)?;
    let direction = riemannian_gradient_at(family, &t.t, &x.value)?;
    Ok(TangentVector { base: x.clone(), direction })
}

/// Riemannian Hessian applied to `v` by central differences of the
/// projected-gradient field `y ↦ P_y ∇ℓ̄_t(y)`, followed by projection at `x`.
pub fn hessian_vector_product_at(family: &ObjectiveFamily, t: &[f64], x: &Mat, v: &Mat) -> Result<Mat> {
    let nv = v.norm();
    if nv == 0.0 {
        return Ok(Mat::zeros(v.nrows(), v.ncols()));
    }
    let h = 1e-5 * (1.0 + x.norm());
    // Difference along the unit direction keeps the step size meaningful.
    let u = v / nv;
    let gp = riemannian_gradient_at(family, t, &(x + &u * h))?;
    let gm = riemannian_gradient_at(family, t, &(x - &u * h))?;
    let d = (gp - gm) / (2.0 * h);
    Ok(family.spec.project(x, &d)? * nv)
}

pub fn hessian_vector_product(
    family: &ObjectiveFamily,
    t: &MultiplierVector,
    x: &ManifoldPoint,
    v: &TangentVector,
) -> Result<TangentVector> {
    family.spec.check(&x.value, TAU_FEAS)?;
    let direction = hessian_vector_product_at(family, &t.t, &x.value, &v.direction)?;
    Ok(TangentVector { base: x.clone(), direction })
}

/// The Riemannian Hessian as a symmetric matrix in an orthonormal tangent basis.
pub fn hessian_matrix(family: &ObjectiveFamily, t: &[f64], x: &Mat) -> Result<Mat> {
    let basis = family.spec.tangent_basis(x)?;
    let d = basis.len();
    let cols: Vec<Mat> = basis
        .iter()
        .map(|e| hessian_vector_product_at(family, t, x, e))
        .collect::<Result<_>>()?;
    let h = Mat::from_fn(d, d, |i, j| basis[i].dot(&cols[j]));
    Ok(linalg::sym(&h))
}
