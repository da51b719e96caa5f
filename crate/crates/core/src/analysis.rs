//! Estimators and statistical validation: multiple-default probabilities,
//! the one-sample Kolmogorov-Smirnov test, and a multidimensional
//! two-sample K-S test in the Peacock / Fasano-Franceschini style.
//!
//! The multidimensional statistic is the largest discrepancy between the
//! two empirical measures over all quadrant orientations anchored at the
//! pooled data points. No usable asymptotic critical values exist beyond
//! one dimension, so the decision is calibrated by permuting the sample
//! labels.

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::marginal::ExitTimeSample;

/// Distribution of the number of coordinates that exited by the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct DefaultDistribution {
    /// `probs[i]` = fraction of scenarios with exactly `i` exits.
    pub probs: Vec<f64>,
    /// Binomial standard errors, elementwise.
    pub stderr: Vec<f64>,
    pub scenarios: usize,
    pub horizon: f64,
}

/// Counts exits per scenario; `P_i` is the fraction with exactly `i` of
/// the `N` coordinates at or below the horizon.
pub fn default_probs(samples: &[ExitTimeSample], horizon: f64) -> Result<DefaultDistribution> {
    if samples.is_empty() {
        return Err(Error::InvalidModel("no scenarios".into()));
    }
    if !(horizon > 0.0) {
        return Err(Error::Domain("horizon must be positive".into()));
    }
    let dim = samples[0].dim();
    if samples.iter().any(|s| s.dim() != dim) {
        return Err(Error::InvalidModel("inconsistent sample dimensions".into()));
    }
    let mut counts = vec![0usize; dim + 1];
    for s in samples {
        counts[s.exits_by(horizon)] += 1;
    }
    let n = samples.len() as f64;
    let probs: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
    let stderr = probs.iter().map(|&p| (p * (1.0 - p) / n).sqrt()).collect();
    Ok(DefaultDistribution {
        probs,
        stderr,
        scenarios: samples.len(),
        horizon,
    })
}

/// Result of a Kolmogorov-Smirnov test.
#[derive(Debug, Clone, PartialEq)]
pub struct KsReport {
    /// Sup-norm statistic (empirical-measure discrepancy).
    pub statistic: f64,
    pub alpha: f64,
    pub reject: bool,
    /// Scenarios actually used from each sample after censoring exclusion.
    pub n_a: usize,
    pub n_b: usize,
    /// Asymptotic (one-sample) or permutation (two-sample) p-value.
    pub p_value: f64,
}

/// Survival function of the Kolmogorov distribution,
/// `Q(x) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 x^2)`.
fn kolmogorov_survival(x: f64) -> f64 {
    if x < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * x * x).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample K-S test against a given CDF, with the asymptotic decision
/// rule. Non-finite samples are excluded.
pub fn ks_1sample<F: Fn(f64) -> f64>(samples: &[f64], cdf: F, alpha: f64) -> Result<KsReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain("alpha must be in (0, 1)".into()));
    }
    let mut xs: Vec<f64> = samples.iter().copied().filter(|x| x.is_finite()).collect();
    if xs.is_empty() {
        return Err(Error::InvalidModel("no finite samples".into()));
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    let nf = n as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / nf);
        d = d.max((i + 1) as f64 / nf - f);
    }
    let p_value = kolmogorov_survival(nf.sqrt() * d);
    Ok(KsReport {
        statistic: d,
        alpha,
        reject: p_value <= alpha,
        n_a: n,
        n_b: 0,
        p_value,
    })
}

// Fenwick tree over y-ranks.
struct Bit {
    tree: Vec<u32>,
}

impl Bit {
    fn new(m: usize) -> Self {
        Self {
            tree: vec![0; m + 1],
        }
    }
    fn clear(&mut self) {
        self.tree.fill(0);
    }
    fn add(&mut self, rank: usize) {
        let mut i = rank + 1;
        while i < self.tree.len() {
            self.tree[i] += 1;
            i += i & i.wrapping_neg();
        }
    }
    fn prefix(&self, rank: usize) -> u32 {
        let mut i = rank + 1;
        let mut s = 0;
        while i > 0 {
            s += self.tree[i];
            i -= i & i.wrapping_neg();
        }
        s
    }
}

// Pooled two-dimensional point set with precomputed processing order and
// y-ranks; labels vary across permutation replicates, geometry does not.
struct Pool2d {
    xs: Vec<f64>,
    y_rank: Vec<usize>,
    order: Vec<usize>,
    m: usize,
}

impl Pool2d {
    fn new(points: &[[f64; 2]]) -> Self {
        let m = points.len();
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| {
            points[a][0]
                .total_cmp(&points[b][0])
                .then(points[a][1].total_cmp(&points[b][1]))
        });
        let mut ys: Vec<f64> = points.iter().map(|p| p[1]).collect();
        ys.sort_by(f64::total_cmp);
        ys.dedup();
        let y_rank = points
            .iter()
            .map(|p| ys.partition_point(|&v| v < p[1]))
            .collect();
        Self {
            xs: points.iter().map(|p| p[0]).collect(),
            y_rank,
            order,
            m,
        }
    }

    // Maximum over anchors and the four quadrant orientations of the
    // discrepancy between the two labelled empirical measures.
    fn statistic(&self, labels: &[bool], bit_a: &mut Bit, bit_b: &mut Bit) -> f64 {
        let m = self.m;
        let n_a = labels.iter().filter(|&&l| l).count();
        let n_b = m - n_a;
        let (na, nb) = (n_a as f64, n_b as f64);
        bit_a.clear();
        bit_b.clear();

        // Totals per y-rank for the quadrants with x above the anchor.
        let mut tot_a_yleq = vec![0u32; m + 1];
        let mut tot_b_yleq = vec![0u32; m + 1];
        for i in 0..m {
            if labels[i] {
                tot_a_yleq[self.y_rank[i]] += 1;
            } else {
                tot_b_yleq[self.y_rank[i]] += 1;
            }
        }
        for r in 1..=m.saturating_sub(1) {
            tot_a_yleq[r] += tot_a_yleq[r - 1];
            tot_b_yleq[r] += tot_b_yleq[r - 1];
        }

        let mut inserted_a = 0u32;
        let mut inserted_b = 0u32;
        let mut d: f64 = 0.0;
        let mut idx = 0usize;
        while idx < m {
            let start = idx;
            let x = self.xs[self.order[idx]];
            while idx < m && self.xs[self.order[idx]] == x {
                let p = self.order[idx];
                if labels[p] {
                    bit_a.add(self.y_rank[p]);
                    inserted_a += 1;
                } else {
                    bit_b.add(self.y_rank[p]);
                    inserted_b += 1;
                }
                idx += 1;
            }
            for j in start..idx {
                let p = self.order[j];
                let yr = self.y_rank[p];
                let qa = bit_a.prefix(yr) as f64;
                let qb = bit_b.prefix(yr) as f64;
                let ta = tot_a_yleq[yr] as f64;
                let tb = tot_b_yleq[yr] as f64;
                let ia = inserted_a as f64;
                let ib = inserted_b as f64;
                let quads_a = [qa, ia - qa, ta - qa, na - ia - ta + qa];
                let quads_b = [qb, ib - qb, tb - qb, nb - ib - tb + qb];
                for k in 0..4 {
                    d = d.max((quads_a[k] / na - quads_b[k] / nb).abs());
                }
            }
        }
        d
    }
}

// One-dimensional two-sample sup statistic over the pooled points.
fn statistic_1d(values: &[f64], labels: &[bool]) -> f64 {
    let m = values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let n_a = labels.iter().filter(|&&l| l).count() as f64;
    let n_b = m as f64 - n_a;
    let mut ca = 0.0;
    let mut cb = 0.0;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < m {
        let v = values[order[i]];
        while i < m && values[order[i]] == v {
            if labels[order[i]] {
                ca += 1.0;
            } else {
                cb += 1.0;
            }
            i += 1;
        }
        d = d.max((ca / n_a - cb / n_b).abs());
    }
    d
}

const DEFAULT_PERMUTATIONS: usize = 199;
const DEFAULT_KS_SEED: u64 = 0x9e37_79b9_7f4a_7c15;
const NAIVE_LIMIT: usize = 4000;

/// Two-sample multidimensional K-S test with default permutation budget
/// and seed.
pub fn ks_2sample_md(
    a: &[ExitTimeSample],
    b: &[ExitTimeSample],
    alpha: f64,
) -> Result<KsReport> {
    ks_2sample_md_with(a, b, alpha, DEFAULT_PERMUTATIONS, DEFAULT_KS_SEED)
}

/// Two-sample multidimensional K-S test.
///
/// Scenarios with any censored (`+inf`) coordinate are excluded jointly;
/// the retained counts are reported. The decision compares the observed
/// statistic to its permutation distribution: `p = (1 + #{perm >= obs}) /
/// (permutations + 1)`, rejecting when `p <= alpha`.
pub fn ks_2sample_md_with(
    a: &[ExitTimeSample],
    b: &[ExitTimeSample],
    alpha: f64,
    permutations: usize,
    seed: u64,
) -> Result<KsReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain("alpha must be in (0, 1)".into()));
    }
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidModel("both samples must be nonempty".into()));
    }
    let dim = a[0].dim();
    if a.iter().chain(b).any(|s| s.dim() != dim) {
        return Err(Error::InvalidModel("sample dimensions do not match".into()));
    }
    if ((permutations + 1) as f64).recip() > alpha {
        return Err(Error::Domain(format!(
            "{permutations} permutations cannot resolve alpha = {alpha}"
        )));
    }
    let finite = |s: &ExitTimeSample| s.times.iter().all(|t| t.is_finite());
    let a_kept: Vec<&ExitTimeSample> = a.iter().filter(|s| finite(s)).collect();
    let b_kept: Vec<&ExitTimeSample> = b.iter().filter(|s| finite(s)).collect();
    let (n_a, n_b) = (a_kept.len(), b_kept.len());
    if n_a < 2 || n_b < 2 {
        return Err(Error::InvalidModel(
            "too few uncensored scenarios for a two-sample test".into(),
        ));
    }
    let m = n_a + n_b;
    let mut labels: Vec<bool> = Vec::with_capacity(m);
    labels.extend(std::iter::repeat(true).take(n_a));
    labels.extend(std::iter::repeat(false).take(n_b));

    let stat: Box<dyn Fn(&[bool]) -> f64> = match dim {
        1 => {
            let values: Vec<f64> = a_kept
                .iter()
                .chain(b_kept.iter())
                .map(|s| s.times[0])
                .collect();
            Box::new(move |l: &[bool]| statistic_1d(&values, l))
        }
        2 => {
            let points: Vec<[f64; 2]> = a_kept
                .iter()
                .chain(b_kept.iter())
                .map(|s| [s.times[0], s.times[1]])
                .collect();
            let pool = Pool2d::new(&points);
            let cell = std::cell::RefCell::new((Bit::new(m), Bit::new(m)));
            Box::new(move |l: &[bool]| {
                let (ref mut ba, ref mut bb) = *cell.borrow_mut();
                pool.statistic(l, ba, bb)
            })
        }
        _ => {
            if m > NAIVE_LIMIT {
                return Err(Error::Domain(format!(
                    "the d = {dim} test enumerates all anchor pairs; keep the \
                     pooled size at or below {NAIVE_LIMIT} scenarios (got {m})"
                )));
            }
            let points: Vec<Vec<f64>> = a_kept
                .iter()
                .chain(b_kept.iter())
                .map(|s| s.times.clone())
                .collect();
            Box::new(move |l: &[bool]| statistic_naive(&points, l))
        }
    };

    let observed = stat(&labels);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut exceed = 0usize;
    let mut perm_labels = labels.clone();
    for _ in 0..permutations {
        perm_labels.shuffle(&mut rng);
        if stat(&perm_labels) >= observed - 1e-12 {
            exceed += 1;
        }
    }
    let p_value = (1 + exceed) as f64 / (permutations + 1) as f64;
    Ok(KsReport {
        statistic: observed,
        alpha,
        reject: p_value <= alpha,
        n_a,
        n_b,
        p_value,
    })
}

// Direct enumeration for d >= 3: every pooled point anchors 2^d quadrants.
fn statistic_naive(points: &[Vec<f64>], labels: &[bool]) -> f64 {
    let m = points.len();
    let dim = points[0].len();
    let n_a = labels.iter().filter(|&&l| l).count() as f64;
    let n_b = m as f64 - n_a;
    let orients = 1usize << dim;
    let mut d: f64 = 0.0;
    for anchor in points {
        let mut counts_a = vec![0.0f64; orients];
        let mut counts_b = vec![0.0f64; orients];
        for (p, &is_a) in points.iter().zip(labels) {
            let mut code = 0usize;
            for k in 0..dim {
                if p[k] > anchor[k] {
                    code |= 1 << k;
                }
            }
            if is_a {
                counts_a[code] += 1.0;
            } else {
                counts_b[code] += 1.0;
            }
        }
        for o in 0..orients {
            d = d.max((counts_a[o] / n_a - counts_b[o] / n_b).abs());
        }
    }
    d
}
