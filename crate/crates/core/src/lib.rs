//! Numerical realization of the differential-game characterization of the
//! inhomogeneous infinity-Laplace equation `-2 Δ∞u = h`.

pub mod error;
pub mod field;
pub mod geometry;
pub mod isaacs;
pub mod linalg;
pub mod sdg;
pub mod sphere;
pub mod tugofwar;
pub mod verify;

pub use error::{Error, Result};
