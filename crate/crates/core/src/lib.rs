//! Reconstruction of piecewise-smooth functions on the unit square from
//! cell averages: jump-curve detection, local quadratic edge models, an
//! implicit spline curve, and per-side quasi-interpolation.

pub mod bench;
pub mod catalog;
pub mod curve;
pub mod edge;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod pipeline;
pub mod quadrature;
pub mod reconstruct;
pub mod signature;
pub mod spline;

pub use error::{Error, Result};
