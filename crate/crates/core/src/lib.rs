//! Lagrangian dual sections for optimization over manifolds: closed-form
//! sections for spectral and Procrustes families, noncrossing certificates,
//! path tracking, and an ellipsoid solver for the polar dual.

pub mod chord;
pub mod dual_ellipsoid;
pub mod error;
pub mod io;
pub mod lagrangian;
pub mod linalg;
pub mod manifolds;
pub mod oracle;
pub mod procrustes;
pub mod sections;
pub mod spectral;

pub use error::{Error, Result};
pub use lagrangian::{Component, MultiplierVector, ObjectiveFamily};
pub use linalg::Mat;
pub use manifolds::{ManifoldPoint, ManifoldSpec, Retraction, TangentVector};
