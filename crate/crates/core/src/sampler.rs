//! The two direct simulation algorithms for joint first exit times.
//!
//! Both start from a correlated standard Gaussian vector `Z ~ N(0, Sigma)`
//! with `Sigma` supplied by [`crate::calibration`], map each coordinate to
//! a chi-squared(1) variable, and invert the transform
//! `H_k(tau) = (mu_k tau - (b_k - x_k))^2 / (sigma_k^2 tau)`:
//!
//! * zero drifts, any dimension: `H_k` has the single root
//!   `tau_k = (b_k - x_k)^2 / (sigma_k^2 chi_k^2)`;
//! * general drifts, two dimensions: each `H_k` has two roots, and one of
//!   the four combinations is selected with probabilities proportional to
//!   `f(roots) / |H_1' H_2'|`, using an auxiliary uniform drawn from its
//!   own substream.
//!
//! Scenario `i` of a run draws only from substreams keyed by `(seed, i)`,
//! so output is bit-identical for a fixed seed at any thread count.

use rand::Rng;
use rayon::prelude::*;

use crate::calibration::{CalibratedCopula, PortfolioModel};
use crate::density2d::{JointDensityEval, PairModel};
use crate::error::{Error, Result};
use crate::marginal::{DimensionParams, ExitTimeSample};
use crate::numerics::{std_normal_cdf, std_normal_quantile};
use crate::streams::{scenario_rng, StreamRole};

const SQRT_HALF_PI: f64 = 1.253_314_137_315_500_3;

/// Maps a standard normal draw to a chi-squared(1) draw through
/// `(Phi^{-1}((Phi(z) + 1) / 2))^2`.
///
/// The map is strictly increasing in `z` (it is the chi-squared quantile
/// composed with `Phi`), which is what lets a correlated Gaussian vector
/// carry its dependence onto the chi-squared vector.
pub fn chi_from_normal(z: f64) -> f64 {
    let chi = if z >= 0.0 {
        // (Phi(z)+1)/2 = 1 - Phi(-z)/2, and the upper-tail argument keeps
        // full relative accuracy for large z.
        let w = 0.5 * std_normal_cdf(-z);
        if w < f64::MIN_POSITIVE {
            return z * z;
        }
        -std_normal_quantile(w).expect("tail probability is inside (0, 1)")
    } else {
        let x = std_normal_cdf(z);
        if x < 1e-4 {
            // erf inverse series: the quantile argument (1 - x)/2 would
            // round to 1/2 and lose the tail entirely.
            let pix2 = std::f64::consts::PI * x * x;
            SQRT_HALF_PI * x * (1.0 + pix2 / 12.0 + 7.0 * pix2 * pix2 / 480.0)
        } else {
            -std_normal_quantile(0.5 * (1.0 - x)).expect("argument is inside (0, 1/2)")
        }
    };
    chi * chi
}

/// The two preimages of a chi-squared value under `H`; they coincide when
/// the drift vanishes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootPair {
    /// Smaller root.
    pub x1: f64,
    /// Larger root.
    pub x2: f64,
}

impl RootPair {
    #[inline]
    pub fn double(&self) -> bool {
        self.x1 == self.x2
    }
}

/// Solves `H(x) = chi2` for a non-defective coordinate.
///
/// With drift, the larger root is computed from the explicit formula and
/// the smaller by the product identity `x1 x2 = (b - x0)^2 / mu^2`, which
/// avoids cancellation for large chi-squared values.
pub fn roots(p: &DimensionParams, chi2: f64) -> Result<RootPair> {
    if !(chi2 >= 0.0) {
        return Err(Error::Domain(format!(
            "chi-squared value must be nonnegative, got {chi2}"
        )));
    }
    if p.defective() {
        return Err(Error::InvalidModel(
            "roots are defined for non-defective coordinates only".into(),
        ));
    }
    let a = p.displacement();
    let s2 = p.sigma * p.sigma;
    if p.mu == 0.0 {
        let x = a * a / (s2 * chi2);
        return Ok(RootPair { x1: x, x2: x });
    }
    let m = a / p.mu;
    let mu2 = p.mu * p.mu;
    let disc = chi2 * (4.0 * p.mu * a + s2 * chi2);
    let x2 = m + (s2 * chi2 + p.sigma * disc.sqrt()) / (2.0 * mu2);
    let x1 = if x2 > 0.0 { m * m / x2 } else { m };
    Ok(RootPair { x1, x2 })
}

/// Probabilities over the root combinations of a two-dimensional draw,
/// in lexicographic order of the root indices.
#[derive(Debug, Clone, PartialEq)]
pub struct RootSelection {
    /// `((u1, u2), p)` entries; probabilities sum to one.
    pub probs: Vec<([u8; 2], f64)>,
}

impl RootSelection {
    /// Consecutive-interval lookup: `[0, p11), [p11, p11 + p12), ...`.
    pub fn select(&self, u: f64) -> [u8; 2] {
        let mut acc = 0.0;
        for &(combo, p) in &self.probs {
            acc += p;
            if u < acc {
                return combo;
            }
        }
        self.probs.last().expect("probs nonempty").0
    }
}

fn distinct_roots(rp: &RootPair) -> Vec<(u8, f64)> {
    if rp.double() {
        vec![(1, rp.x1)]
    } else {
        vec![(1, rp.x1), (2, rp.x2)]
    }
}

pub(crate) fn root_probs_with(
    eval: &JointDensityEval,
    d1: &DimensionParams,
    d2: &DimensionParams,
    rp1: &RootPair,
    rp2: &RootPair,
) -> Result<RootSelection> {
    let r1 = distinct_roots(rp1);
    let r2 = distinct_roots(rp2);
    let mut combos = Vec::with_capacity(r1.len() * r2.len());
    let mut best = f64::NEG_INFINITY;
    for &(u1, x1) in &r1 {
        for &(u2, x2) in &r2 {
            // log weight: log f - log|H1'| - log|H2'|
            let lw = eval.log_density(x1, x2)?
                - d1.chi2_transform_deriv(x1).abs().ln()
                - d2.chi2_transform_deriv(x2).abs().ln();
            best = best.max(lw);
            combos.push(([u1, u2], lw));
        }
    }
    if !best.is_finite() {
        return Err(Error::DegenerateSelection);
    }
    let mut total = 0.0;
    let mut probs: Vec<([u8; 2], f64)> = combos
        .into_iter()
        .map(|(c, lw)| {
            let w = (lw - best).exp();
            total += w;
            (c, w)
        })
        .collect();
    for p in &mut probs {
        p.1 /= total;
    }
    Ok(RootSelection { probs })
}

/// Root-selection probabilities for one two-dimensional draw.
pub fn root_probs(
    pair: &PairModel,
    rp1: &RootPair,
    rp2: &RootPair,
) -> Result<RootSelection> {
    let eval = JointDensityEval::new(pair)?;
    root_probs_with(&eval, &pair.d1, &pair.d2, rp1, rp2)
}

fn check_copula(model_hash: &str, copula: &CalibratedCopula, n: usize) -> Result<()> {
    if copula.sigma.n() != n {
        return Err(Error::CopulaMismatch(format!(
            "copula is {}-dimensional, model is {n}-dimensional",
            copula.sigma.n()
        )));
    }
    if copula.model_hash != model_hash {
        return Err(Error::CopulaMismatch(
            "copula was calibrated for a different model".into(),
        ));
    }
    Ok(())
}

/// Simulates `n` joint exit-time scenarios for a zero-drift portfolio.
///
/// Each scenario draws `Z ~ N(0, Sigma)` through the copula's triangular
/// factor and inverts the single-root transform coordinate by coordinate;
/// marginals are exact by construction.
pub fn sample_zero_drift(
    model: &PortfolioModel,
    copula: &CalibratedCopula,
    n: usize,
    seed: u64,
) -> Result<Vec<ExitTimeSample>> {
    model.validate()?;
    if !model.zero_drift() {
        return Err(Error::InvalidModel(
            "the N-dimensional sampler requires zero drifts".into(),
        ));
    }
    check_copula(&model.model_hash(), copula, model.n())?;
    let dim = model.n();
    let scale: Vec<f64> = model
        .dims
        .iter()
        .map(|d| {
            let k = d.displacement() / d.sigma;
            k * k
        })
        .collect();

    let samples: Vec<ExitTimeSample> = (0..n as u64)
        .into_par_iter()
        .map_init(
            || (vec![0.0; dim], vec![0.0; dim]),
            |(eps, z), i| {
                let mut rng = scenario_rng(seed, i, StreamRole::Normals);
                for e in eps.iter_mut() {
                    *e = rng.sample(rand_distr::StandardNormal);
                }
                copula.chol.lower_mul(eps, z);
                let times = z
                    .iter()
                    .zip(&scale)
                    .map(|(&zk, &sc)| sc / chi_from_normal(zk))
                    .collect();
                ExitTimeSample { times }
            },
        )
        .collect();
    Ok(samples)
}

/// Output of the drifted sampler: the scenarios plus how many draws were
/// discarded because the density underflowed at every root combination.
#[derive(Debug, Clone)]
pub struct DriftedRun {
    pub samples: Vec<ExitTimeSample>,
    pub degenerate_redraws: u64,
}

const MAX_REDRAWS: usize = 64;

/// Simulates `n` scenarios of a (possibly) drifted two-dimensional pair by
/// multiple-roots inversion.
///
/// Per scenario: correlated normals from the `Normals` substream become
/// chi-squared values, each coordinate's root pair is computed, the four
/// combinations are weighted by the joint density over the transform
/// Jacobian, and an independent uniform from the `Selector` substream
/// picks one. Degenerate draws are redrawn from the same substreams and
/// counted.
pub fn sample_drifted_2d(
    pair: &PairModel,
    copula: &CalibratedCopula,
    n: usize,
    seed: u64,
) -> Result<DriftedRun> {
    pair.validate()?;
    if pair.d1.defective() || pair.d2.defective() {
        return Err(Error::InvalidModel(
            "the drifted sampler requires non-defective coordinates".into(),
        ));
    }
    let model = PortfolioModel::from_pair(pair)?;
    check_copula(&model.model_hash(), copula, 2)?;
    let eval = JointDensityEval::new(pair)?;

    let redraws = std::sync::atomic::AtomicU64::new(0);
    let results: Vec<Result<ExitTimeSample>> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng_n = scenario_rng(seed, i, StreamRole::Normals);
            let mut rng_u = scenario_rng(seed, i, StreamRole::Selector);
            for _attempt in 0..MAX_REDRAWS {
                let e1: f64 = rng_n.sample(rand_distr::StandardNormal);
                let e2: f64 = rng_n.sample(rand_distr::StandardNormal);
                let z1 = copula.chol[(0, 0)] * e1;
                let z2 = copula.chol[(1, 0)] * e1 + copula.chol[(1, 1)] * e2;
                let rp1 = roots(&pair.d1, chi_from_normal(z1))?;
                let rp2 = roots(&pair.d2, chi_from_normal(z2))?;
                let sel = match root_probs_with(&eval, &pair.d1, &pair.d2, &rp1, &rp2) {
                    Ok(sel) => sel,
                    Err(Error::DegenerateSelection) => {
                        redraws.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                let u: f64 = rng_u.random();
                let [u1, u2] = sel.select(u);
                let t1 = if u1 == 1 { rp1.x1 } else { rp1.x2 };
                let t2 = if u2 == 1 { rp2.x1 } else { rp2.x2 };
                return Ok(ExitTimeSample {
                    times: vec![t1, t2],
                });
            }
            Err(Error::DegenerateSelection)
        })
        .collect();

    let mut samples = Vec::with_capacity(n);
    for r in results {
        samples.push(r?);
    }
    Ok(DriftedRun {
        samples,
        degenerate_redraws: redraws.into_inner(),
    })
}
