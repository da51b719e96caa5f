//! Direct simulation of the joint first exit times of a vector of correlated
//! Brownian motions from constant barriers.
//!
//! Each coordinate follows `dX_k(t) = mu_k dt + sigma_k dW_k(t)` and exits at
//! `tau_k = inf{t > 0 : X_k(t) = b_k}`. Instead of discretising the paths,
//! the samplers here map a correlated Gaussian vector through the chi-squared
//! transform `H_k(tau) = (mu_k tau - (b_k - x_k))^2 / (sigma_k^2 tau)` and
//! invert it, selecting among the multiple roots with density-ratio
//! probabilities. The Gaussian correlation matrix is calibrated so that the
//! rank correlations of the transformed exit times match the exact ones
//! computed from the closed-form joint density of each pair.
//!
//! Module map:
//!
//! * [`numerics`] — normal CDF/quantile, modified Bessel `I_nu` of real
//!   order, and adaptive Gauss-Kronrod quadrature over finite and infinite
//!   intervals.
//! * [`marginal`] — the one-dimensional first-passage (inverse Gaussian)
//!   law: density, CDF, defective mass and exact sampling.
//! * [`density2d`] — the closed-form joint density `f(s, t)` of a correlated
//!   pair of exit times, for general drifts and the zero-drift fast path.
//! * [`calibration`] — pairwise rank correlations, the Spearman-to-Pearson
//!   map, and assembly/repair of the Gaussian copula matrix.
//! * [`sampler`] — the two simulation algorithms: N-dimensional zero drift
//!   and two-dimensional general drift.
//! * [`euler`] — the Euler-discretisation Monte Carlo baseline.
//! * [`analysis`] — multiple-default probability estimators and one- and
//!   two-sample (multidimensional) Kolmogorov-Smirnov tests.

pub mod analysis;
pub mod calibration;
pub mod density2d;
pub mod error;
pub mod euler;
pub mod linalg;
pub mod marginal;
pub mod numerics;
pub mod sampler;
pub mod streams;

pub use error::{Error, Result};
pub use marginal::{DimensionParams, ExitTimeSample};

mod guide;
