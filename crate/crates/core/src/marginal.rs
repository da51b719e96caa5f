//! One-dimensional first-passage law of a drifted Brownian motion to a
//! constant barrier: density, CDF, defective mass, the chi-squared
//! transform, and exact sampling by multiple-roots inversion.
//!
//! With drift `mu`, volatility `sigma`, start `x0` and barrier `b`, the
//! exit time `tau` has the inverse Gaussian density
//!
//! ```text
//! f(t) = |b - x0| / (sigma sqrt(2 pi t^3)) * exp(-(mu t - (b - x0))^2 / (2 sigma^2 t))
//! ```
//!
//! which integrates to one exactly when the drift does not point away from
//! the barrier (`mu / (b - x0) >= 0`); otherwise the law is defective and
//! the missing mass sits at `+inf`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{integrate_1d, std_normal_cdf, QuadratureSpec};
use crate::sampler::{roots, RootPair};

const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

/// Per-coordinate Brownian parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensionParams {
    /// Drift per unit time.
    pub mu: f64,
    /// Volatility per square-root time; strictly positive.
    pub sigma: f64,
    /// Start value; must differ from the barrier.
    pub x0: f64,
    /// Barrier level.
    pub barrier: f64,
}

impl DimensionParams {
    pub fn new(mu: f64, sigma: f64, x0: f64, barrier: f64) -> Result<Self> {
        let p = Self {
            mu,
            sigma,
            x0,
            barrier,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) {
            return Err(Error::InvalidModel(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        if !(self.mu.is_finite() && self.x0.is_finite() && self.barrier.is_finite()) {
            return Err(Error::InvalidModel("parameters must be finite".into()));
        }
        if self.x0 == self.barrier {
            return Err(Error::InvalidModel(
                "start value must differ from the barrier".into(),
            ));
        }
        Ok(())
    }

    /// Signed distance `b - x0`.
    #[inline]
    pub fn displacement(&self) -> f64 {
        self.barrier - self.x0
    }

    /// True when the drift points away from the barrier, so the exit time
    /// has positive mass at `+inf`.
    #[inline]
    pub fn defective(&self) -> bool {
        self.mu / self.displacement() < 0.0
    }

    /// The chi-squared transform `H(t) = (mu t - (b - x0))^2 / (sigma^2 t)`.
    #[inline]
    pub fn chi2_transform(&self, t: f64) -> f64 {
        let d = self.mu * t - self.displacement();
        d * d / (self.sigma * self.sigma * t)
    }

    /// Derivative `H'(t) = ((mu t)^2 - (b - x0)^2) / (sigma^2 t^2)`.
    #[inline]
    pub fn chi2_transform_deriv(&self, t: f64) -> f64 {
        let mt = self.mu * t;
        let a = self.displacement();
        (mt * mt - a * a) / (self.sigma * self.sigma * t * t)
    }

    /// Coordinate with the drift reflected toward the barrier. Exit times
    /// conditioned on being finite have exactly this law.
    fn drift_reflected(&self) -> Self {
        Self {
            mu: -self.mu,
            ..*self
        }
    }
}

/// One scenario's vector of exit times; `+inf` marks a coordinate that
/// never reaches its barrier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitTimeSample {
    pub times: Vec<f64>,
}

impl ExitTimeSample {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.iter().any(|&t| !(t > 0.0)) {
            return Err(Error::InvalidModel(
                "exit times must be positive (or +inf)".into(),
            ));
        }
        Ok(Self { times })
    }

    pub fn dim(&self) -> usize {
        self.times.len()
    }

    /// Number of coordinates that exited by `horizon`.
    pub fn exits_by(&self, horizon: f64) -> usize {
        self.times.iter().filter(|&&t| t <= horizon).count()
    }
}

/// First-passage density `f(t)` at `t > 0`.
pub fn marginal_density(p: &DimensionParams, t: f64) -> f64 {
    debug_assert!(t > 0.0);
    let a = p.displacement();
    let dev = p.mu * t - a;
    let var = p.sigma * p.sigma * t;
    a.abs() / (p.sigma * SQRT_2PI * (t * t * t).sqrt()) * (-0.5 * dev * dev / var).exp()
}

/// First-passage CDF `P(tau <= t)`.
///
/// Driftless coordinates use the reflection closed form
/// `2 Phi(-|b - x0| / (sigma sqrt(t)))`; otherwise the density is
/// integrated numerically.
pub fn marginal_cdf(p: &DimensionParams, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Ok(0.0);
    }
    if p.mu == 0.0 {
        return Ok(2.0 * std_normal_cdf(-p.displacement().abs() / (p.sigma * t.sqrt())));
    }
    let spec = QuadratureSpec::default();
    let v = integrate_1d(|u| marginal_density(p, u), 0.0, t, &spec)?;
    Ok(v.clamp(0.0, 1.0))
}

/// Mass at `+inf`: `1 - int_0^inf f`. Zero whenever the drift does not
/// point away from the barrier.
pub fn defective_mass(p: &DimensionParams) -> Result<f64> {
    if !p.defective() {
        return Ok(0.0);
    }
    let spec = QuadratureSpec::default();
    let total = integrate_1d(|u| marginal_density(p, u), 0.0, f64::INFINITY, &spec)?;
    Ok((1.0 - total).clamp(0.0, 1.0))
}

/// Probability of selecting the smaller root given the generating
/// chi-squared value, from the one-dimensional density-ratio rule.
pub(crate) fn smaller_root_prob(p: &DimensionParams, rp: &RootPair) -> f64 {
    if rp.x1 == rp.x2 {
        return 1.0;
    }
    let h1 = p.chi2_transform_deriv(rp.x1).abs();
    let h2 = p.chi2_transform_deriv(rp.x2).abs();
    let ratio = (h1 / h2) * (marginal_density(p, rp.x2) / marginal_density(p, rp.x1));
    1.0 / (1.0 + ratio)
}

/// Draws one exit time by inverting the chi-squared transform.
///
/// Defective coordinates first return `+inf` with the defective mass;
/// conditional on a finite exit the drift-reflected law applies exactly.
pub fn sample_marginal<R: Rng + ?Sized>(p: &DimensionParams, rng: &mut R) -> Result<f64> {
    p.validate()?;
    if p.defective() {
        let q = defective_mass(p)?;
        if rng.random::<f64>() < q {
            return Ok(f64::INFINITY);
        }
        return sample_marginal(&p.drift_reflected(), rng);
    }
    let z: f64 = rng.sample(rand_distr::StandardNormal);
    let chi2 = z * z;
    let rp = roots(p, chi2)?;
    if p.mu == 0.0 {
        return Ok(rp.x1);
    }
    let p1 = smaller_root_prob(p, &rp);
    let u: f64 = rng.random();
    Ok(if u < p1 { rp.x1 } else { rp.x2 })
}
