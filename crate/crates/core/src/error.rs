use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point is infeasible: {constraint} residual {residual:.3e} exceeds {tolerance:.1e}")]
    Infeasible {
        constraint: String,
        residual: f64,
        tolerance: f64,
    },

    #[error("invalid manifold: {0}")]
    InvalidManifold(String),

    #[error("retraction `{mode}` is not available on {manifold}")]
    UnsupportedRetraction { mode: String, manifold: String },

    #[error("operation `{op}` is not supported on {manifold}")]
    UnsupportedManifold { op: String, manifold: String },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid multiplier: {0}")]
    InvalidMultiplier(String),

    #[error("square root of negative value {value:.3e}")]
    Domain { value: f64 },

    #[error("objective is not differentiable at this point: {0}")]
    NonSmooth(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("numerical failure: {message} (residual {residual:.3e})")]
    Numerical { message: String, residual: f64 },

    #[error("matrices are linearly dependent (gram eigenvalue ratio {ratio:.3e})")]
    DegenerateSpan { ratio: f64 },

    #[error("B has equal singular values ({sigma1} vs {sigma2})")]
    DegenerateB { sigma1: f64, sigma2: f64 },

    #[error("instance is not certified as sectioned; use the chord or rgd-multistart method")]
    NotCertified,

    #[error("objective decreased by {decrease:.3e} at iteration {iteration}; the Lipschitz constant L is likely underestimated")]
    StepSize { iteration: usize, decrease: f64 },

    #[error("path-tracking constants are invalid: {0}")]
    ConstantsInvalid(String),

    #[error("could not estimate constants: {0}")]
    ConstantsUnavailable(String),

    #[error("budget exhausted: {0}")]
    BudgetExhausted(String),

    #[error("objective image is degenerate: {0}")]
    DegenerateImage(String),

    #[error("constraint vector lies outside the convex hull of the constraint image: direction {direction:?} gives {value:.6e} > support {support:.6e}")]
    DualInfeasible {
        direction: Vec<f64>,
        value: f64,
        support: f64,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
