//! Gaussian-copula calibration.
//!
//! For each coordinate pair, the rank correlation of the transformed exit
//! times `U_k = F_chi2(H_k(tau_k)) = 2 Phi(sqrt(H_k(tau_k))) - 1` is
//! computed from the pair's joint density,
//!
//! ```text
//! Corr(U_i, U_j) = 12 ( int int U_i(s) U_j(t) f_ij(s, t) ds dt - 1/4 ),
//! ```
//!
//! then mapped to a Gaussian correlation by `r = 2 sin(pi rho_U / 6)`.
//! Only pairwise integrals are ever needed, so the assembled matrix can
//! fail to be positive semidefinite for N > 2; it is then repaired by
//! eigenvalue clipping and diagonal renormalisation, and the perturbation
//! is reported so calibration distortion is visible.
//!
//! Calibration is pure and relatively expensive, so results can be kept in
//! a small JSON cache keyed by a hash of the model and method.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::density2d::{JointDensityEval, PairModel};
use crate::error::{Error, Result};
use crate::euler::{euler_sample, EulerConfig};
use crate::linalg::{cholesky_lower, sym_eigen, Matrix};
use crate::marginal::{marginal_cdf, marginal_density, DimensionParams};
use crate::numerics::{integrate_1d, integrate_2d, std_normal_cdf, QuadratureSpec};

const EIGEN_CLIP: f64 = 1e-10;

/// A portfolio: per-coordinate parameters plus the instantaneous
/// correlation matrix of the driving Brownian motions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioModel {
    pub dims: Vec<DimensionParams>,
    pub corr: Matrix,
}

impl PortfolioModel {
    pub fn new(dims: Vec<DimensionParams>, corr: Matrix) -> Result<Self> {
        let m = Self { dims, corr };
        m.validate()?;
        Ok(m)
    }

    pub fn from_pair(pair: &PairModel) -> Result<Self> {
        let mut corr = Matrix::identity(2);
        corr[(0, 1)] = pair.rho;
        corr[(1, 0)] = pair.rho;
        Self::new(vec![pair.d1, pair.d2], corr)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.len() < 2 {
            return Err(Error::InvalidModel(
                "a portfolio needs at least two dimensions".into(),
            ));
        }
        for (k, d) in self.dims.iter().enumerate() {
            d.validate()
                .map_err(|e| Error::InvalidModel(format!("dimension {k}: {e}")))?;
        }
        let n = self.dims.len();
        if self.corr.n() != n {
            return Err(Error::InvalidModel(format!(
                "correlation matrix is {}x{}, expected {n}x{n}",
                self.corr.n(),
                self.corr.n()
            )));
        }
        if !self.corr.is_symmetric(1e-12) {
            return Err(Error::InvalidModel("correlation matrix must be symmetric".into()));
        }
        for i in 0..n {
            if (self.corr[(i, i)] - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidModel("correlation diagonal must be 1".into()));
            }
            for j in 0..n {
                if i != j && !(self.corr[(i, j)].abs() < 1.0) {
                    return Err(Error::InvalidModel(format!(
                        "correlation ({i}, {j}) must be in (-1, 1)"
                    )));
                }
            }
        }
        let (vals, _) = sym_eigen(&self.corr)?;
        if vals.iter().any(|&l| l < -1e-10) {
            return Err(Error::InvalidModel(
                "correlation matrix is not positive semidefinite".into(),
            ));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.dims.len()
    }

    pub fn zero_drift(&self) -> bool {
        self.dims.iter().all(|d| d.mu == 0.0)
    }

    pub fn pair(&self, i: usize, j: usize) -> Result<PairModel> {
        PairModel::new(self.dims[i], self.dims[j], self.corr[(i, j)])
    }

    /// Hash of the full parameter set; used to match copulas to models and
    /// as part of the calibration-cache key.
    pub fn model_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for d in &self.dims {
            hasher.update(format!("{:e},{:e},{:e},{:e};", d.mu, d.sigma, d.x0, d.barrier));
        }
        for row in self.corr.rows() {
            for v in row {
                hasher.update(format!("{v:e},"));
            }
        }
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// How the pairwise rank correlations are computed.
#[derive(Debug, Clone, PartialEq)]
pub enum RankCorrMethod {
    /// Two-dimensional quadrature against the closed-form joint density.
    Quadrature,
    /// Monte Carlo estimate from Euler exit-time samples; a validation
    /// fallback with a reported standard error.
    EulerMc(EulerConfig),
}

impl RankCorrMethod {
    fn cache_tag(&self) -> String {
        match self {
            RankCorrMethod::Quadrature => "quadrature".into(),
            RankCorrMethod::EulerMc(cfg) => format!(
                "euler_mc(step={:e},horizon={:e},n={},seed={})",
                cfg.step, cfg.horizon, cfg.scenarios, cfg.seed
            ),
        }
    }
}

/// A rank-correlation estimate; quadrature results carry no standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankCorr {
    pub value: f64,
    pub std_error: Option<f64>,
}

/// The transformed uniform `U(tau) = 2 Phi(sqrt(H(tau))) - 1`.
#[inline]
fn transformed_uniform(d: &DimensionParams, tau: f64) -> f64 {
    2.0 * std_normal_cdf(d.chi2_transform(tau).sqrt()) - 1.0
}

/// Rank correlation of the transformed exit times of a pair.
pub fn pair_rank_corr(m: &PairModel, method: &RankCorrMethod) -> Result<RankCorr> {
    m.validate()?;
    if m.d1.defective() || m.d2.defective() {
        return Err(Error::InvalidModel(
            "calibration requires non-defective coordinates".into(),
        ));
    }
    match method {
        RankCorrMethod::Quadrature => rank_corr_quadrature(m),
        RankCorrMethod::EulerMc(cfg) => rank_corr_euler(m, cfg),
    }
}

fn rank_corr_quadrature(m: &PairModel) -> Result<RankCorr> {
    let eval = JointDensityEval::new(m)?;
    let spec = QuadratureSpec {
        abs_tol: 1e-7,
        rel_tol: 1e-6,
        max_subdivisions: 4000,
    };
    let poison: std::cell::Cell<Option<Error>> = std::cell::Cell::new(None);
    let integral = integrate_2d(
        |s, t| match eval.log_density(s, t) {
            Ok(lf) => {
                let g = transformed_uniform(&m.d1, s) * transformed_uniform(&m.d2, t);
                g * lf.exp()
            }
            Err(e) => {
                poison.set(Some(e));
                0.0
            }
        },
        &spec,
    )?;
    if let Some(e) = poison.take() {
        return Err(e);
    }
    let rho_u = 12.0 * (integral - 0.25);
    Ok(RankCorr {
        value: rho_u.clamp(-1.0, 1.0),
        std_error: None,
    })
}

// Monte Carlo fallback. Scenarios censored at the Euler horizon contribute
// their marginal conditional mean E[U | tau > horizon], computed by
// quadrature, so the estimate stays consistent up to the (reported) noise
// and a residual bias of the order of the squared censoring probability.
fn rank_corr_euler(m: &PairModel, cfg: &EulerConfig) -> Result<RankCorr> {
    let model = PortfolioModel::from_pair(m)?;
    let samples = euler_sample(&model, cfg)?;
    let dims = [m.d1, m.d2];
    let mut tail_mean = [0.0f64; 2];
    for (k, d) in dims.iter().enumerate() {
        let f_h = marginal_cdf(d, cfg.horizon)?;
        let tail = 1.0 - f_h;
        tail_mean[k] = if tail <= 0.0 {
            // No mass beyond the horizon; the value is never used.
            0.0
        } else {
            let spec = QuadratureSpec::default();
            integrate_1d(
                |t| transformed_uniform(d, t) * marginal_density(d, t),
                cfg.horizon,
                f64::INFINITY,
                &spec,
            )? / tail
        };
    }
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for s in &samples {
        let mut u = [0.0f64; 2];
        for k in 0..2 {
            let t = s.times[k];
            u[k] = if t.is_finite() {
                transformed_uniform(&dims[k], t)
            } else {
                tail_mean[k]
            };
        }
        let prod = u[0] * u[1];
        sum += prod;
        sumsq += prod * prod;
    }
    let n = samples.len() as f64;
    let mean = sum / n;
    let var = (sumsq / n - mean * mean).max(0.0);
    let rho_u = 12.0 * (mean - 0.25);
    Ok(RankCorr {
        value: rho_u.clamp(-1.0, 1.0),
        std_error: Some(12.0 * (var / n).sqrt()),
    })
}

/// Exact Spearman-to-Pearson map for the Gaussian copula:
/// `rho_Z = 2 sin(pi rho_U / 6)`.
pub fn spearman_to_pearson(rho_u: f64) -> f64 {
    let v = 2.0 * (std::f64::consts::FRAC_PI_6 * rho_u).sin();
    if v.abs() > 1.0 {
        log::warn!("spearman_to_pearson({rho_u}) = {v} clamped to [-1, 1]");
        v.clamp(-1.0, 1.0)
    } else {
        v
    }
}

/// Report of the positive-semidefinite repair; both fields are zero when
/// the pairwise matrix was already admissible.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RepairReport {
    /// Largest eigenvalue adjustment applied by clipping.
    pub max_eigen_clip: f64,
    /// Frobenius distance between the raw and repaired matrices.
    pub frobenius_shift: f64,
}

/// Calibrated Gaussian copula: the correlation matrix, its lower
/// triangular factor, the repair report, and the hash of the source model.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibratedCopula {
    pub sigma: Matrix,
    pub chol: Matrix,
    pub repair: RepairReport,
    pub model_hash: String,
}

/// Calibrates the copula for a portfolio.
///
/// Pairwise integrals run in parallel; with nonzero drifts the joint
/// density is only available for a single pair, so N must be 2.
pub fn calibrate(model: &PortfolioModel, method: &RankCorrMethod) -> Result<CalibratedCopula> {
    model.validate()?;
    let n = model.n();
    if !model.zero_drift() && n > 2 {
        return Err(Error::DimensionRestriction(format!(
            "drifted calibration needs the pairwise joint density and is \
             limited to N = 2; got N = {n} with nonzero drifts"
        )));
    }
    for (k, d) in model.dims.iter().enumerate() {
        if d.defective() {
            return Err(Error::InvalidModel(format!(
                "dimension {k} is defective (drift points away from the barrier)"
            )));
        }
    }

    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .collect();
    let entries: Vec<((usize, usize), f64)> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let pm = model.pair(i, j)?;
            let rc = pair_rank_corr(&pm, method)?;
            Ok(((i, j), spearman_to_pearson(rc.value)))
        })
        .collect::<Result<_>>()?;

    let mut raw = Matrix::identity(n);
    for ((i, j), r) in entries {
        raw[(i, j)] = r;
        raw[(j, i)] = r;
    }

    let (sigma, repair) = repair_to_psd(&raw)?;
    let chol = cholesky_lower(&sigma, 1e-12)
        .map_err(|e| Error::Factorization(format!("after repair: {e}")))?;
    Ok(CalibratedCopula {
        sigma,
        chol,
        repair,
        model_hash: model.model_hash(),
    })
}

fn repair_to_psd(raw: &Matrix) -> Result<(Matrix, RepairReport)> {
    let n = raw.n();
    let (vals, vecs) = sym_eigen(raw)?;
    let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    if min >= 0.0 {
        return Ok((raw.clone(), RepairReport::default()));
    }
    let mut clip = 0.0f64;
    let mut lam = Matrix::zeros(n);
    for (i, &l) in vals.iter().enumerate() {
        let l2 = l.max(EIGEN_CLIP);
        clip = clip.max((l2 - l).abs());
        lam[(i, i)] = l2;
    }
    let mut m = vecs.mul(&lam).mul(&vecs.transpose());
    // Renormalise to a unit diagonal.
    let d: Vec<f64> = (0..n).map(|i| m[(i, i)].sqrt()).collect();
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] /= d[i] * d[j];
        }
    }
    // Exact symmetry and exact unit diagonal.
    for i in 0..n {
        m[(i, i)] = 1.0;
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
    let shift = m.frobenius_distance(raw);
    Ok((
        m,
        RepairReport {
            max_eigen_clip: clip,
            frobenius_shift: shift,
        },
    ))
}

#[derive(Serialize, Deserialize)]
struct CacheEntry {
    sigma: Matrix,
    repair: RepairReport,
    model_hash: String,
}

/// Human-readable JSON cache of calibrated copulas, keyed by a hash of the
/// model parameters and the calibration method.
pub struct CalibrationCache {
    path: PathBuf,
}

impl CalibrationCache {
    pub fn new<P: AsRef<Path>>(path: P) -> Self {
        Self {
            path: path.as_ref().to_path_buf(),
        }
    }

    pub fn key(model: &PortfolioModel, method: &RankCorrMethod) -> String {
        let mut hasher = Sha256::new();
        hasher.update(model.model_hash());
        hasher.update("|");
        hasher.update(method.cache_tag());
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    fn read_map(&self) -> Result<std::collections::BTreeMap<String, CacheEntry>> {
        if !self.path.exists() {
            return Ok(Default::default());
        }
        let text = std::fs::read_to_string(&self.path)
            .map_err(|e| Error::Cache(format!("read {}: {e}", self.path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Cache(format!("parse: {e}")))
    }

    /// Fetches a cached copula and re-factorises it.
    pub fn load(
        &self,
        model: &PortfolioModel,
        method: &RankCorrMethod,
    ) -> Result<Option<CalibratedCopula>> {
        let map = self.read_map()?;
        match map.get(&Self::key(model, method)) {
            None => Ok(None),
            Some(entry) => {
                let chol = cholesky_lower(&entry.sigma, 1e-12)?;
                Ok(Some(CalibratedCopula {
                    sigma: entry.sigma.clone(),
                    chol,
                    repair: entry.repair,
                    model_hash: entry.model_hash.clone(),
                }))
            }
        }
    }

    pub fn store(
        &self,
        model: &PortfolioModel,
        method: &RankCorrMethod,
        copula: &CalibratedCopula,
    ) -> Result<()> {
        let mut map = self.read_map()?;
        map.insert(
            Self::key(model, method),
            CacheEntry {
                sigma: copula.sigma.clone(),
                repair: copula.repair,
                model_hash: copula.model_hash.clone(),
            },
        );
        let text = serde_json::to_string_pretty(&map).map_err(|e| Error::Cache(e.to_string()))?;
        std::fs::write(&self.path, text)
            .map_err(|e| Error::Cache(format!("write {}: {e}", self.path.display())))?;
        Ok(())
    }
}

/// Calibrates through the cache: load on hit, compute and store on miss.
pub fn calibrate_cached(
    model: &PortfolioModel,
    method: &RankCorrMethod,
    cache: &CalibrationCache,
) -> Result<CalibratedCopula> {
    if let Some(c) = cache.load(model, method)? {
        return Ok(c);
    }
    let c = calibrate(model, method)?;
    cache.store(model, method, &c)?;
    Ok(c)
}
