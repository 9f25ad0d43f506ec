//! Quadrature, special-function kernels and fitting machinery shared by the
//! physics and calibration layers.

pub mod kernel;
pub mod leastsq;
pub(crate) mod linalg;
pub mod quad;

pub use kernel::{k_integral, meijer_g_3003, SQRT_PI};
pub use leastsq::{least_squares, FitOptions, LeastSquaresFit};
pub use quad::{adaptive_bisect_gk15, adaptive_gk15, QuadOptions, QuadResult};
