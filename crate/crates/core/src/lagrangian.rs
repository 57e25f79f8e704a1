//! Objective families `f : M → R^{k+1}`, their Lagrangians `ℓ_t = ⟨t, f⟩`
//! and Euclidean gradients of the smooth ambient extensions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::manifolds::{ManifoldPoint, ManifoldSpec, TAU_FEAS};

/// Values of a wrapped component below this are treated as rounding noise.
const SQRT_NEG_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Component {
    /// `⟨A, X⟩`
    LinearTrace {
        #[serde(with = "crate::io::rowmajor")]
        matrix: Mat,
    },
    /// `xᵀ A x` (for matrix points, `⟨X, A X⟩`)
    SphereQuadratic {
        #[serde(with = "crate::io::rowmajor")]
        matrix: Mat,
    },
    /// `⟨b, x⟩` with `b` stored as a column
    SphereLinear {
        #[serde(with = "crate::io::rowmajor")]
        matrix: Mat,
    },
    /// `⟨A, X Xᵀ⟩`
    StiefelGram {
        #[serde(with = "crate::io::rowmajor")]
        matrix: Mat,
    },
    /// `√inner`; the inner component must be nonnegative on the manifold.
    SqrtWrapped { inner: Box<Component> },
}

impl Component {
    pub fn kind(&self) -> &'static str {
        match self {
            Component::LinearTrace { .. } => "linear_trace",
            Component::SphereQuadratic { .. } => "sphere_quadratic",
            Component::SphereLinear { .. } => "sphere_linear",
            Component::StiefelGram { .. } => "stiefel_gram",
            Component::SqrtWrapped { .. } => "sqrt_wrapped",
        }
    }

    fn normalize(self, shape: (usize, usize)) -> Result<Component> {
        let mismatch = |what: &str, m: &Mat| {
            Err(Error::ShapeMismatch(format!(
                "{what} component is {}x{} but the ambient space is {}x{}",
                m.nrows(),
                m.ncols(),
                shape.0,
                shape.1
            )))
        };
        match self {
            Component::LinearTrace { matrix } => {
                if matrix.shape() != shape {
                    return mismatch("linear_trace", &matrix);
                }
                Ok(Component::LinearTrace { matrix })
            }
            Component::SphereQuadratic { matrix } | Component::StiefelGram { matrix }
                if matrix.shape() != (shape.0, shape.0) =>
            {
                mismatch("quadratic", &matrix)
            }
            c @ (Component::SphereQuadratic { .. } | Component::StiefelGram { .. }) => Ok(c),
            Component::SphereLinear { matrix } => {
                let col = if matrix.nrows() == 1 && shape.1 == 1 { matrix.transpose() } else { matrix };
                if shape.1 != 1 || col.shape() != shape {
                    return mismatch("sphere_linear", &col);
                }
                Ok(Component::SphereLinear { matrix: col })
            }
            Component::SqrtWrapped { inner } => {
                Ok(Component::SqrtWrapped { inner: Box::new(inner.normalize(shape)?) })
            }
        }
    }

    pub fn value(&self, x: &Mat) -> Result<f64> {
        Ok(match self {
            Component::LinearTrace { matrix } | Component::SphereLinear { matrix } => matrix.dot(x),
            Component::SphereQuadratic { matrix } | Component::StiefelGram { matrix } => {
                x.dot(&(matrix * x))
            }
            Component::SqrtWrapped { inner } => {
                let v = inner.value(x)?;
                if v < -SQRT_NEG_TOL {
                    return Err(Error::Domain { value: v });
                }
                v.max(0.0).sqrt()
            }
        })
    }

    pub fn gradient(&self, x: &Mat) -> Result<Mat> {
        Ok(match self {
            Component::LinearTrace { matrix } | Component::SphereLinear { matrix } => matrix.clone(),
            Component::SphereQuadratic { matrix } | Component::StiefelGram { matrix } => {
                (matrix + matrix.transpose()) * x
            }
            Component::SqrtWrapped { inner } => {
                let v = inner.value(x)?;
                if v <= 0.0 {
                    return Err(Error::NonSmooth(format!("sqrt of {} at {v:.3e}", inner.kind())));
                }
                inner.gradient(x)? / (2.0 * v.sqrt())
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct MultiplierVector {
    pub t: Vec<f64>,
}

impl MultiplierVector {
    pub fn new(t: Vec<f64>) -> Result<Self> {
        if t.is_empty() || t.iter().all(|&x| x == 0.0) {
            return Err(Error::InvalidMultiplier("t must be nonzero".into()));
        }
        if t.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidMultiplier("t must be finite".into()));
        }
        if t[0] < 0.0 {
            return Err(Error::InvalidMultiplier(format!("t0 = {} must be nonnegative", t[0])));
        }
        Ok(Self { t })
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Same ray, unit Euclidean norm.
    pub fn normalized(&self) -> Self {
        let n = self.t.iter().map(|x| x * x).sum::<f64>().sqrt();
        Self { t: self.t.iter().map(|x| x / n).collect() }
    }
}

impl TryFrom<Vec<f64>> for MultiplierVector {
    type Error = Error;
    fn try_from(t: Vec<f64>) -> Result<Self> {
        Self::new(t)
    }
}

impl From<MultiplierVector> for Vec<f64> {
    fn from(m: MultiplierVector) -> Vec<f64> {
        m.t
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveFamily {
    pub spec: ManifoldSpec,
    pub components: Vec<Component>,
}

impl ObjectiveFamily {
    /// Validates component shapes against the manifold's ambient space.
    pub fn new(spec: ManifoldSpec, components: Vec<Component>) -> Result<Self> {
        spec.validate()?;
        if components.is_empty() {
            return Err(Error::ShapeMismatch("a family needs at least one component".into()));
        }
        let shape = spec.ambient_shape();
        let components = components.into_iter().map(|c| c.normalize(shape)).collect::<Result<_>>()?;
        Ok(Self { spec, components })
    }

    /// Number of components, `k + 1`.
    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    fn check_t(&self, t: &[f64]) -> Result<()> {
        if t.len() != self.len() {
            return Err(Error::ShapeMismatch(format!(
                "multiplier has {} entries, family has {} components",
                t.len(),
                self.len()
            )));
        }
        Ok(())
    }

    pub fn values(&self, x: &Mat) -> Result<Vec<f64>> {
        self.components.iter().map(|c| c.value(x)).collect()
    }

    pub fn lagrangian_raw(&self, t: &[f64], x: &Mat) -> Result<f64> {
        self.check_t(t)?;
        let mut acc = 0.0;
        for (c, &ti) in self.components.iter().zip(t) {
            if ti != 0.0 {
                acc += ti * c.value(x)?;
            }
        }
        Ok(acc)
    }

    pub fn euclidean_gradient_raw(&self, t: &[f64], x: &Mat) -> Result<Mat> {
        self.check_t(t)?;
        let mut g = Mat::zeros(x.nrows(), x.ncols());
        for (c, &ti) in self.components.iter().zip(t) {
            if ti != 0.0 {
                g += c.gradient(x)? * ti;
            }
        }
        Ok(g)
    }

    fn check_point(&self, x: &ManifoldPoint) -> Result<()> {
        if x.spec != self.spec {
            return Err(Error::ShapeMismatch(format!(
                "family lives on {} but the point is on {}",
                self.spec.name(),
                x.spec.name()
            )));
        }
        self.spec.check(&x.value, TAU_FEAS)
    }
}

pub fn eval_f(family: &ObjectiveFamily, x: &ManifoldPoint) -> Result<Vec<f64>> {
    family.check_point(x)?;
    family.values(&x.value)
}

pub fn eval_lagrangian(family: &ObjectiveFamily, t: &MultiplierVector, x: &ManifoldPoint) -> Result<f64> {
    family.check_point(x)?;
    family.lagrangian_raw(&t.t, &x.value)
}

pub fn euclidean_gradient(family: &ObjectiveFamily, t: &MultiplierVector, x: &ManifoldPoint) -> Result<Mat> {
    family.check_point(x)?;
    family.euclidean_gradient_raw(&t.t, &x.value)
}

/// Wraps component 0 in a square root after checking nonnegativity on 1000
/// seeded points.
pub fn compose_sqrt_first(family: &ObjectiveFamily, seed: u64) -> Result<ObjectiveFamily> {
    let mut rng = linalg::rng(seed);
    let first = &family.components[0];
    for _ in 0..1000 {
        let x = family.spec.random_point_rng(&mut rng);
        let v = match first {
            Component::SqrtWrapped { inner } => inner.value(&x)?,
            c => c.value(&x)?,
        };
        if v < -SQRT_NEG_TOL {
            return Err(Error::Precondition(format!(
                "component 0 takes value {v:.6e} at {:?}",
                x.as_slice()
            )));
        }
    }
    let mut out = family.clone();
    out.components[0] = Component::SqrtWrapped { inner: Box::new(first.clone()) };
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere3() -> ManifoldSpec {
        ManifoldSpec::Sphere { n: 3 }
    }

    fn e1() -> Mat {
        Mat::from_column_slice(3, 1, &[1.0, 0.0, 0.0])
    }

    #[test]
    fn eval_examples() {
        let fam = ObjectiveFamily::new(
            sphere3(),
            vec![
                Component::SphereQuadratic { matrix: linalg::diag(&[3.0, 1.0, 0.0]) },
                Component::SphereQuadratic { matrix: Mat::identity(3, 3) },
            ],
        )
        .unwrap();
        let x = ManifoldPoint::new(sphere3(), e1()).unwrap();
        assert_eq!(eval_f(&fam, &x).unwrap(), vec![3.0, 1.0]);
        let t = MultiplierVector::new(vec![0.0, 1.0]).unwrap();
        assert_eq!(eval_lagrangian(&fam, &t, &x).unwrap(), 1.0);
        let t = MultiplierVector::new(vec![1.0, 0.0]).unwrap();
        let g = euclidean_gradient(&fam, &t, &x).unwrap();
        assert_eq!(g.as_slice(), &[6.0, 0.0, 0.0]);
    }

    #[test]
    fn stiefel_trace_example() {
        let spec = ManifoldSpec::Stiefel { n: 3, m: 2 };
        let b = Mat::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let fam = ObjectiveFamily::new(spec.clone(), vec![Component::LinearTrace { matrix: b.clone() }]).unwrap();
        let x = ManifoldPoint::new(spec, b).unwrap();
        assert_eq!(eval_f(&fam, &x).unwrap(), vec![2.0]);
    }

    #[test]
    fn multiplier_validation() {
        assert!(MultiplierVector::new(vec![0.0, 0.0]).is_err());
        assert!(MultiplierVector::new(vec![-1.0, 1.0]).is_err());
        assert!(MultiplierVector::new(vec![0.0, -1.0]).is_ok());
        let parsed: std::result::Result<MultiplierVector, _> = serde_json::from_str("[-0.5, 1.0]");
        assert!(parsed.is_err());
    }

    #[test]
    fn shape_mismatch_rejected() {
        let r = ObjectiveFamily::new(sphere3(), vec![Component::SphereQuadratic { matrix: Mat::identity(2, 2) }]);
        assert!(matches!(r, Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn sphere_linear_accepts_row() {
        let fam = ObjectiveFamily::new(
            sphere3(),
            vec![Component::SphereLinear { matrix: Mat::from_row_slice(1, 3, &[0.0, 1.0, 0.0]) }],
        )
        .unwrap();
        assert_eq!(fam.values(&e1()).unwrap(), vec![0.0]);
    }

    #[test]
    fn sqrt_wrap_examples() {
        let b = Mat::from_column_slice(3, 1, &[1.0, 2.0, -1.0]);
        let fam = ObjectiveFamily::new(
            sphere3(),
            vec![
                Component::SphereQuadratic { matrix: &b * b.transpose() },
                Component::SphereQuadratic { matrix: Mat::identity(3, 3) },
            ],
        )
        .unwrap();
        let w = compose_sqrt_first(&fam, 0).unwrap();
        let mut r = linalg::rng(2);
        let x = fam.spec.random_point_rng(&mut r);
        assert!((w.values(&x).unwrap()[0] - b.dot(&x).abs()).abs() < 1e-12);
        // gradient of |bᵀx| is b·sign(bᵀx)
        let g = w.euclidean_gradient_raw(&[1.0, 0.0], &x).unwrap();
        assert!((g - &b * b.dot(&x).signum()).norm() < 1e-12);
        // constant 1 stays constant 1
        let one = ObjectiveFamily::new(sphere3(), vec![Component::SphereQuadratic { matrix: Mat::identity(3, 3) }]).unwrap();
        let w1 = compose_sqrt_first(&one, 0).unwrap();
        assert!((w1.values(&x).unwrap()[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn sqrt_wrap_rejects_negative() {
        let fam = ObjectiveFamily::new(sphere3(), vec![Component::SphereQuadratic { matrix: -Mat::identity(3, 3) }]).unwrap();
        assert!(matches!(compose_sqrt_first(&fam, 0), Err(Error::Precondition(_))));
    }

    #[test]
    fn sqrt_at_zero_is_nonsmooth() {
        let b = Mat::from_column_slice(3, 1, &[0.0, 1.0, 0.0]);
        let c = Component::SqrtWrapped { inner: Box::new(Component::SphereQuadratic { matrix: &b * b.transpose() }) };
        assert!(matches!(c.gradient(&e1()), Err(Error::NonSmooth(_))));
    }

    #[test]
    fn json_roundtrip() {
        let fam = ObjectiveFamily::new(
            ManifoldSpec::Stiefel { n: 3, m: 2 },
            vec![
                Component::LinearTrace { matrix: Mat::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]) },
                Component::StiefelGram { matrix: Mat::identity(3, 3) },
            ],
        )
        .unwrap();
        let s = serde_json::to_string(&fam).unwrap();
        assert!(s.contains("\"kind\":\"linear_trace\""));
        assert!(s.contains("[[1.0,2.0],[3.0,4.0],[5.0,6.0]]"));
        let back: ObjectiveFamily = serde_json::from_str(&s).unwrap();
        assert_eq!(back, fam);
    }
}
