//! Euler-discretisation Monte Carlo baseline.
//!
//! Correlated increments on a fixed grid, with a coordinate's exit recorded
//! at the first grid time at or beyond its barrier. Excursions inside a
//! step are missed, so exit times are biased late and crossing
//! probabilities low; that bias is the point of comparison for the direct
//! samplers. No bridge correction is applied.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::PortfolioModel;
use crate::error::{Error, Result};
use crate::linalg::cholesky_lower;
use crate::marginal::ExitTimeSample;
use crate::streams::{scenario_rng, StreamRole};

/// Grid and scenario budget for one Euler run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EulerConfig {
    /// Grid step; the experiments use 0.0015625 = 1/640.
    pub step: f64,
    /// Simulation horizon; coordinates that have not crossed by then are
    /// recorded as `+inf`.
    pub horizon: f64,
    pub scenarios: usize,
    pub seed: u64,
}

impl Default for EulerConfig {
    fn default() -> Self {
        Self {
            step: 0.0015625,
            horizon: 10.0,
            scenarios: 100_000,
            seed: 0,
        }
    }
}

impl EulerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step < self.horizon) {
            return Err(Error::InvalidModel(format!(
                "need 0 < step < horizon, got step {} horizon {}",
                self.step, self.horizon
            )));
        }
        if self.scenarios < 1 {
            return Err(Error::InvalidModel("scenarios must be >= 1".into()));
        }
        Ok(())
    }
}

/// Simulates the correlated paths and records first grid-point crossings.
///
/// Crossing direction comes from the starting side: coordinate `k` exits
/// once `sgn(x0_k - b_k) (X_k - b_k) <= 0`. Crossed coordinates stop;
/// the rest continue to the horizon. One substream per scenario makes the
/// output independent of the parallel schedule.
pub fn euler_sample(model: &PortfolioModel, cfg: &EulerConfig) -> Result<Vec<ExitTimeSample>> {
    model.validate()?;
    cfg.validate()?;
    let n = model.n();
    let chol = cholesky_lower(&model.corr, 1e-12)?;
    let steps = (cfg.horizon / cfg.step + 1e-9).floor() as usize;
    let sqrt_h = cfg.step.sqrt();
    let drift: Vec<f64> = model.dims.iter().map(|d| d.mu * cfg.step).collect();
    let vol: Vec<f64> = model.dims.iter().map(|d| d.sigma * sqrt_h).collect();
    let dir: Vec<f64> = model
        .dims
        .iter()
        .map(|d| (d.x0 - d.barrier).signum())
        .collect();

    let samples: Vec<ExitTimeSample> = (0..cfg.scenarios as u64)
        .into_par_iter()
        .map_init(
            || (vec![0.0f64; n], vec![0.0f64; n], vec![0.0f64; n]),
            |(eps, z, x), i| {
                let mut rng = scenario_rng(cfg.seed, i, StreamRole::Normals);
                for (xk, d) in x.iter_mut().zip(&model.dims) {
                    *xk = d.x0;
                }
                let mut times = vec![f64::INFINITY; n];
                let mut alive = n;
                for j in 1..=steps {
                    for e in eps.iter_mut() {
                        *e = rng.sample(rand_distr::StandardNormal);
                    }
                    chol.lower_mul(eps, z);
                    for k in 0..n {
                        if times[k].is_finite() {
                            continue;
                        }
                        x[k] += drift[k] + vol[k] * z[k];
                        if dir[k] * (x[k] - model.dims[k].barrier) <= 0.0 {
                            times[k] = j as f64 * cfg.step;
                            alive -= 1;
                        }
                    }
                    if alive == 0 {
                        break;
                    }
                }
                ExitTimeSample { times }
            },
        )
        .collect();
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::marginal::{marginal_cdf, DimensionParams};

    fn firm(mu: f64) -> DimensionParams {
        DimensionParams::new(mu, 1.0, 5.0f64.ln(), 0.0).unwrap()
    }

    fn pair_model(rho: f64) -> PortfolioModel {
        let mut corr = Matrix::identity(2);
        corr[(0, 1)] = rho;
        corr[(1, 0)] = rho;
        PortfolioModel::new(vec![firm(0.0), firm(0.0)], corr).unwrap()
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let model = pair_model(0.3);
        let cfg = EulerConfig {
            step: 0.01,
            horizon: 2.0,
            scenarios: 64,
            seed: 9,
        };
        let a = euler_sample(&model, &cfg).unwrap();
        let b = euler_sample(&model, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn crossing_probability_is_biased_low() {
        // 1-D check against the exact CDF: the Euler estimate must sit at
        // or below the closed form, up to three standard errors.
        let model = pair_model(0.0);
        let cfg = EulerConfig {
            step: 0.0125,
            horizon: 10.0,
            scenarios: 40_000,
            seed: 4,
        };
        let samples = euler_sample(&model, &cfg).unwrap();
        let n = samples.len() as f64;
        let p_hat = samples
            .iter()
            .filter(|s| s.times[0] <= cfg.horizon)
            .count() as f64
            / n;
        let exact = marginal_cdf(&model.dims[0], cfg.horizon).unwrap();
        let se = (exact * (1.0 - exact) / n).sqrt();
        assert!(
            p_hat <= exact + 3.0 * se,
            "Euler {p_hat} vs exact {exact}"
        );
        assert!(p_hat > exact - 0.1, "bias implausibly large: {p_hat} vs {exact}");
    }

    #[test]
    fn step_halving_converges_toward_exact() {
        let model = pair_model(0.0);
        let exact = marginal_cdf(&model.dims[0], 10.0).unwrap();
        let mut prev_gap = f64::INFINITY;
        for (seed, step) in [(11u64, 0.05), (12, 0.0125), (13, 0.003125)] {
            let cfg = EulerConfig {
                step,
                horizon: 10.0,
                scenarios: 100_000,
                seed,
            };
            let samples = euler_sample(&model, &cfg).unwrap();
            let p_hat = samples
                .iter()
                .filter(|s| s.times[0] <= cfg.horizon)
                .count() as f64
                / samples.len() as f64;
            let gap = exact - p_hat;
            assert!(
                gap < prev_gap + 0.002,
                "step {step}: gap {gap} did not shrink (prev {prev_gap})"
            );
            prev_gap = gap;
        }
        assert!(prev_gap < 0.012, "finest-step gap {prev_gap}");
    }

    #[test]
    fn increment_correlation_matches_model() {
        // Pool one-step increments across scenarios and compare their
        // sample correlation to the model correlation.
        let rho = 0.4;
        let model = pair_model(rho);
        let cfg = EulerConfig {
            step: 1.0,
            horizon: 101.0,
            scenarios: 10_000,
            seed: 2,
        };
        // Kill crossings: push barriers far away so paths run the full grid.
        let far = DimensionParams::new(0.0, 1.0, 0.0, 1e9).unwrap();
        let model = PortfolioModel::new(vec![far, far], model.corr).unwrap();
        let samples = euler_sample(&model, &cfg).unwrap();
        assert!(samples.iter().all(|s| s.times.iter().all(|t| t.is_infinite())));
        // Increments are not directly exposed; re-derive correlation from
        // fresh draws through the same stream layer instead.
        let chol = cholesky_lower(&model.corr, 1e-12).unwrap();
        let mut sum12 = 0.0;
        let mut n = 0.0;
        for i in 0..1000u64 {
            let mut rng = scenario_rng(cfg.seed, i, StreamRole::Normals);
            let mut eps = [0.0f64; 2];
            let mut z = [0.0f64; 2];
            for _ in 0..1000 {
                for e in eps.iter_mut() {
                    *e = rng.sample(rand_distr::StandardNormal);
                }
                chol.lower_mul(&eps, &mut z);
                sum12 += z[0] * z[1];
                n += 1.0;
            }
        }
        let corr = sum12 / n;
        let se = ((1.0 + rho * rho) / n).sqrt();
        assert!((corr - rho).abs() < 3.0 * se, "corr = {corr}");
    }

    #[test]
    fn rejects_bad_configs() {
        let model = pair_model(0.0);
        let bad = EulerConfig {
            step: 0.0,
            ..EulerConfig::default()
        };
        assert!(euler_sample(&model, &bad).is_err());
        let bad2 = EulerConfig {
            step: 20.0,
            horizon: 10.0,
            ..EulerConfig::default()
        };
        assert!(euler_sample(&model, &bad2).is_err());
    }
}
