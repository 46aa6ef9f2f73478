//! Tensor-product B-splines, quasi-interpolation from cell averages,
//! least-squares fitting, and zero-level contouring.

pub mod basis;
pub mod coeffs;
pub mod contour;
pub mod lsq;
pub mod quasi;

pub use basis::{axis_basis, centered_bspline, TensorSpline};
pub use coeffs::{central_factorial, local_op_l, quasi_coeffs, QuasiCoeffTable};
pub use contour::zero_level_curve;
pub use lsq::{fit_least_squares, LeastSquaresFit};
pub use quasi::{quasi_fit_on_mesh, quasi_interpolant, sample_mesh};
