//! Special functions and quadrature shared by every other module.

mod bessel;
mod normal;
mod quad;

pub use bessel::{bessel_i, bessel_i_log, ln_gamma};
pub use normal::{std_normal_cdf, std_normal_pdf, std_normal_quantile};
pub use quad::{integrate_1d, integrate_2d, QuadratureSpec};
