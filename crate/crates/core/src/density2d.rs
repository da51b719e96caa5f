//! Closed-form joint density `f(s, t)` of the first exit times of a
//! correlated pair of drifted Brownian motions.
//!
//! The construction maps the pair to independent standard Brownian motions,
//! which turns the two barriers into the edges of a wedge of opening angle
//! `alpha` in the plane; the starting point sits at polar coordinates
//! `(r0, theta0)` inside it. The density of the first exit through either
//! edge is a Bessel series over orders `n pi / alpha`, and the remaining
//! coordinate's exit adds an inverse Gaussian factor that is integrated
//! over the exit position `r`. With zero drifts the `r`-integral has a
//! closed form and the series collapses to orders `n pi / (2 alpha)`.
//!
//! Arbitrary barrier/start configurations reduce to the all-positive case
//! by flipping the sign of any coordinate with `x0 < b`, which flips the
//! drift of that coordinate and the sign of the cross-correlation; the
//! geometry below bakes those flips in.
//!
//! Everything is evaluated in log space: `r0^2 / (2s)` alone exceeds the
//! exponent range for small `s` long before the density itself degenerates.

use std::cell::Cell;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::marginal::DimensionParams;
use crate::numerics::{bessel_i_log, integrate_1d, integrate_2d, QuadratureSpec};

/// A correlated pair of coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairModel {
    pub d1: DimensionParams,
    pub d2: DimensionParams,
    /// Instantaneous correlation of the two Brownian motions.
    pub rho: f64,
}

impl PairModel {
    pub fn new(d1: DimensionParams, d2: DimensionParams, rho: f64) -> Result<Self> {
        let m = Self { d1, d2, rho };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        self.d1.validate()?;
        self.d2.validate()?;
        if !(self.rho.abs() < 1.0) {
            return Err(Error::InvalidModel(format!(
                "|rho| must be < 1, got {}",
                self.rho
            )));
        }
        Ok(())
    }

    /// The same pair with coordinates swapped.
    pub fn swapped(&self) -> Self {
        Self {
            d1: self.d2,
            d2: self.d1,
            rho: self.rho,
        }
    }
}

/// Polar geometry of the independence-transformed pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityGeometry {
    /// Sign-adjusted correlation `sgn((b1-x1)/(b2-x2)) * rho`.
    pub rho_tilde: f64,
    /// Wedge opening angle, in (0, pi); exactly pi/2 when `rho_tilde = 0`.
    pub alpha: f64,
    /// Radius of the starting point.
    pub r0: f64,
    /// Angle of the starting point, in (0, alpha).
    pub theta0: f64,
    /// Transformed drift components (sign flips folded in).
    pub mu1_tilde: f64,
    pub mu2_tilde: f64,
}

/// Computes the wedge geometry for a valid, non-defective pair.
pub fn geometry(m: &PairModel) -> Result<DensityGeometry> {
    m.validate()?;
    if m.d1.defective() || m.d2.defective() {
        return Err(Error::InvalidModel(
            "joint density requires non-defective coordinates".into(),
        ));
    }
    let a1 = m.d1.displacement().abs();
    let a2 = m.d2.displacement().abs();
    if a1 == 0.0 || a2 == 0.0 {
        return Err(Error::InvalidModel(
            "start value must differ from the barrier".into(),
        ));
    }
    let s1 = m.d1.displacement().signum();
    let s2 = m.d2.displacement().signum();
    let k1 = a1 / m.d1.sigma;
    let k2 = a2 / m.d2.sigma;

    let rho_tilde = s1 * s2 * m.rho;
    let root = (1.0 - rho_tilde * rho_tilde).sqrt();
    let alpha = root.atan2(-rho_tilde);
    let r0 = ((k1 * k1 + k2 * k2 - 2.0 * rho_tilde * k1 * k2) / (root * root)).sqrt();
    let theta0 = (k2 * root).atan2(k1 - rho_tilde * k2);

    // Flip each coordinate onto the x0 > b side; the flipped drifts are
    // -sgn(b - x0) mu, nonpositive for non-defective coordinates.
    let mh1 = -s1 * m.d1.mu;
    let mh2 = -s2 * m.d2.mu;
    let mu1_tilde = (mh1 / m.d1.sigma - rho_tilde * mh2 / m.d2.sigma) / root;
    let mu2_tilde = mh2 / m.d2.sigma;

    debug_assert!(theta0 > 0.0 && theta0 < alpha && alpha < std::f64::consts::PI);
    Ok(DensityGeometry {
        rho_tilde,
        alpha,
        r0,
        theta0,
        mu1_tilde,
        mu2_tilde,
    })
}

/// Truncation policy for the Bessel series.
#[derive(Debug, Clone, Copy)]
struct SeriesSpec {
    rel_tol: f64,
    min_terms: usize,
    consecutive: usize,
    max_terms: usize,
}

impl Default for SeriesSpec {
    fn default() -> Self {
        Self {
            rel_tol: 1e-12,
            min_terms: 10,
            consecutive: 3,
            max_terms: 500,
        }
    }
}

/// Joint-density evaluator with the geometry computed once.
///
/// Evaluation is pure; a shared instance is safe for concurrent reads.
#[derive(Debug, Clone)]
pub struct JointDensityEval {
    geom: DensityGeometry,
    zero_drift: bool,
    series: SeriesSpec,
    quad: QuadratureSpec,
}

impl JointDensityEval {
    pub fn new(m: &PairModel) -> Result<Self> {
        Ok(Self {
            geom: geometry(m)?,
            zero_drift: m.d1.mu == 0.0 && m.d2.mu == 0.0,
            series: SeriesSpec::default(),
            quad: QuadratureSpec {
                abs_tol: 1e-12,
                rel_tol: 1e-9,
                max_subdivisions: 200,
            },
        })
    }

    pub fn geometry(&self) -> &DensityGeometry {
        &self.geom
    }

    /// `ln f(s, t)`; `-inf` signals underflow of the density itself.
    ///
    /// The diagonal `s = t` is a null set where the two branch formulas
    /// disagree; it is evaluated as the one-sided limit from `s < t` by a
    /// relative nudge of the first argument.
    pub fn log_density(&self, s: f64, t: f64) -> Result<f64> {
        if !(s > 0.0 && t > 0.0) {
            return Err(Error::Domain(format!(
                "joint density needs positive times, got ({s}, {t})"
            )));
        }
        let (s, t) = if s == t { (s * (1.0 - 1e-9), t) } else { (s, t) };
        // Branch data: earlier exit time, later exit time, series phase.
        let g = &self.geom;
        let (lo, hi, phase) = if s < t {
            (s, t, (g.alpha - g.theta0) / g.alpha)
        } else {
            (t, s, g.theta0 / g.alpha)
        };
        if self.zero_drift {
            self.log_density_zero_drift(lo, hi, phase)
        } else {
            self.log_density_drifted(lo, hi, phase, s < t)
        }
    }

    /// `f(s, t)` itself; underflow comes back as 0.
    pub fn density(&self, s: f64, t: f64) -> Result<f64> {
        Ok(self.log_density(s, t)?.exp())
    }

    // Zero drift: the r-integral is closed, all terms share one Bessel
    // argument w and orders n pi / (2 alpha).
    fn log_density_zero_drift(&self, lo: f64, hi: f64, phase: f64) -> Result<f64> {
        let g = &self.geom;
        let sin_a = g.alpha.sin();
        let cos2 = g.alpha.cos() * g.alpha.cos();
        let denom = hi - lo * cos2;
        let w = g.r0 * g.r0 * (hi - lo) / (4.0 * lo * denom);
        let expo = -g.r0 * g.r0 * sin_a * sin_a / (2.0 * denom);
        let ln_pref = (std::f64::consts::PI * sin_a).ln()
            - std::f64::consts::LN_2
            - 2.0 * g.alpha.ln()
            - 0.5 * (lo.ln() + denom.ln())
            - (hi - lo).ln();

        let mut sum = 0.0f64;
        let mut run = 0usize;
        let nu_step = std::f64::consts::PI / (2.0 * g.alpha);
        for n in 1..=self.series.max_terms {
            let nf = n as f64;
            let coeff = nf * (nf * std::f64::consts::PI * phase).sin();
            let term = if coeff == 0.0 {
                0.0
            } else {
                // Scaled Bessel e^{-w} I_nu(w) keeps everything in range.
                coeff * (bessel_i_log(nu_step * nf, w)? - w).exp()
            };
            sum += term;
            if n >= self.series.min_terms && term.abs() <= self.series.rel_tol * sum.abs() {
                run += 1;
                if run >= self.series.consecutive {
                    if sum <= 0.0 {
                        return Ok(f64::NEG_INFINITY);
                    }
                    return Ok(ln_pref + expo + w + sum.ln());
                }
            } else {
                run = 0;
            }
        }
        Err(Error::SeriesNonConvergence {
            terms: self.series.max_terms,
            log_partial: ln_pref + expo + w + sum.abs().max(f64::MIN_POSITIVE).ln(),
        })
    }

    // General drift: each series term carries an integral over the exit
    // radius r with a Gaussian envelope; sum and integral are exchanged and
    // each term is integrated adaptively on (0, r_max).
    fn log_density_drifted(&self, lo: f64, hi: f64, phase: f64, first_exits_first: bool) -> Result<f64> {
        let g = &self.geom;
        let sin_a = g.alpha.sin();
        let cos_a = g.alpha.cos();
        let (m1, m2) = (g.mu1_tilde, g.mu2_tilde);

        // Drift seen by the coordinate that exits second, along its barrier
        // normal, and the linear coefficient of r in the exponent.
        let (late_drift, q) = if first_exits_first {
            (m2, m1 * cos_a)
        } else {
            (m1 * sin_a - m2 * cos_a, (m1 * cos_a + m2 * sin_a) * cos_a)
        };
        let e0 = -g.r0 * (g.r0 / (2.0 * lo) + m1 * g.theta0.cos() + m2 * g.theta0.sin())
            - 0.5 * (m1 * m1 + m2 * m2) * lo
            - 0.5 * late_drift * late_drift * (hi - lo);
        let p = (hi - lo * cos_a * cos_a) / (2.0 * lo * (hi - lo));
        let c = g.r0 / lo;
        let ln_pref = (0.5 * std::f64::consts::PI).sqrt().ln() + sin_a.ln()
            - 2.0 * g.alpha.ln()
            - lo.ln()
            - 1.5 * (hi - lo).ln();

        // Envelope e^{(q+c) r - p r^2} falls below e^{-38} of its peak here.
        let qc = q + c;
        let r_max = (qc + (qc * qc + 152.0 * p).sqrt()) / (2.0 * p);

        // Common log-scale shift from a coarse scan of the first term.
        let nu1 = std::f64::consts::PI / g.alpha;
        let mut shift = f64::NEG_INFINITY;
        for j in 1..=33 {
            let r = r_max * j as f64 / 33.0;
            let v = q * r - p * r * r + bessel_i_log(nu1, c * r)?;
            shift = shift.max(v);
        }
        if !shift.is_finite() {
            return Ok(f64::NEG_INFINITY);
        }

        let poison: Cell<Option<Error>> = Cell::new(None);
        let mut sum = 0.0f64;
        let mut run = 0usize;
        for n in 1..=self.series.max_terms {
            let nf = n as f64;
            let coeff = nf * (nf * std::f64::consts::PI * phase).sin();
            let term = if coeff == 0.0 {
                0.0
            } else {
                let nu = nu1 * nf;
                let integral = integrate_1d(
                    |r| {
                        let ln_val = match bessel_i_log(nu, c * r) {
                            Ok(b) => q * r - p * r * r + b - shift,
                            Err(e) => {
                                poison.set(Some(e));
                                return 0.0;
                            }
                        };
                        ln_val.min(700.0).exp()
                    },
                    0.0,
                    r_max,
                    &self.quad,
                )?;
                if let Some(e) = poison.take() {
                    return Err(e);
                }
                coeff * integral
            };
            sum += term;
            if n >= self.series.min_terms && term.abs() <= self.series.rel_tol * sum.abs() {
                run += 1;
                if run >= self.series.consecutive {
                    if sum <= 0.0 {
                        return Ok(f64::NEG_INFINITY);
                    }
                    return Ok(ln_pref + e0 + shift + sum.ln());
                }
            } else {
                run = 0;
            }
        }
        Err(Error::SeriesNonConvergence {
            terms: self.series.max_terms,
            log_partial: ln_pref + e0 + shift + sum.abs().max(f64::MIN_POSITIVE).ln(),
        })
    }
}

/// One-shot evaluation of the joint density at `(s, t)`.
pub fn joint_density(m: &PairModel, s: f64, t: f64) -> Result<f64> {
    JointDensityEval::new(m)?.density(s, t)
}

/// `E[chi_1^2 chi_2^2]` of the transformed zero-drift pair, by quadrature
/// of `f(s, t) / (s t)` over the quadrant.
pub fn chi2_product_moment(m: &PairModel, spec: &QuadratureSpec) -> Result<f64> {
    if m.d1.mu != 0.0 || m.d2.mu != 0.0 {
        return Err(Error::Domain(
            "chi-squared product moment requires zero drifts".into(),
        ));
    }
    let eval = JointDensityEval::new(m)?;
    let poison: Cell<Option<Error>> = Cell::new(None);
    let integral = integrate_2d(
        |s, t| match eval.log_density(s, t) {
            Ok(lf) => (lf - s.ln() - t.ln()).exp(),
            Err(e) => {
                poison.set(Some(e));
                0.0
            }
        },
        spec,
    )?;
    if let Some(e) = poison.take() {
        return Err(e);
    }
    let k1 = m.d1.displacement() / m.d1.sigma;
    let k2 = m.d2.displacement() / m.d2.sigma;
    Ok(k1 * k1 * k2 * k2 * integral)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marginal::marginal_density;

    fn dim(mu: f64, sigma: f64, x0: f64, barrier: f64) -> DimensionParams {
        DimensionParams::new(mu, sigma, x0, barrier).unwrap()
    }

    // The portfolio parameters used throughout the experiments:
    // sigma = 1, start log 5, barrier 0.
    fn firm(mu: f64) -> DimensionParams {
        dim(mu, 1.0, 5.0f64.ln(), 0.0)
    }

    #[test]
    fn geometry_zero_correlation_is_a_right_angle() {
        let m = PairModel::new(firm(0.0), firm(0.0), 0.0).unwrap();
        let g = geometry(&m).unwrap();
        assert_eq!(g.alpha, std::f64::consts::FRAC_PI_2);
        assert_eq!(g.rho_tilde, 0.0);
    }

    #[test]
    fn geometry_pythagorean_radius() {
        // sigma = 1, rho_tilde = 0, displacements 3 and 4: r0 = 5.
        let m = PairModel::new(dim(0.0, 1.0, 0.0, 3.0), dim(0.0, 1.0, 0.0, -4.0), 0.0).unwrap();
        let g = geometry(&m).unwrap();
        assert!((g.r0 - 5.0).abs() < 1e-14);
    }

    #[test]
    fn geometry_theta0_right_angle_case() {
        // |b1-x1| sigma2 = rho_tilde |b2-x2| sigma1 puts theta0 at pi/2.
        let rho: f64 = 0.5;
        let m = PairModel::new(dim(0.0, 1.0, 0.0, 1.0), dim(0.0, 1.0, 0.0, 2.0), rho).unwrap();
        let g = geometry(&m).unwrap();
        assert!((g.theta0 - std::f64::consts::FRAC_PI_2).abs() < 1e-14);
    }

    #[test]
    fn geometry_branch_signs() {
        // rho_tilde > 0 opens the wedge past a right angle.
        let m = PairModel::new(firm(0.0), firm(0.0), 0.5).unwrap();
        let g = geometry(&m).unwrap();
        assert!(g.alpha > std::f64::consts::FRAC_PI_2);
        assert!((g.alpha - (-0.5f64).acos()).abs() < 1e-15);
        // Flipping one barrier side flips rho_tilde.
        let m2 = PairModel::new(dim(0.0, 1.0, 0.0, 1.0), firm(0.0), 0.5).unwrap();
        let g2 = geometry(&m2).unwrap();
        assert_eq!(g2.rho_tilde, -0.5);
        assert!(g2.alpha < std::f64::consts::FRAC_PI_2);
    }

    #[test]
    fn geometry_rejects_defective() {
        // Drift away from the barrier.
        let m = PairModel::new(dim(0.05, 1.0, 5.0f64.ln(), 0.0), firm(0.0), 0.1).unwrap();
        assert!(geometry(&m).is_err());
    }

    #[test]
    fn independent_zero_drift_density_factorises() {
        let m = PairModel::new(firm(0.0), firm(0.0), 0.0).unwrap();
        let eval = JointDensityEval::new(&m).unwrap();
        for &(s, t) in &[(1.0, 2.0), (2.0, 1.0), (5.0, 9.0)] {
            let joint = eval.density(s, t).unwrap();
            let product = marginal_density(&m.d1, s) * marginal_density(&m.d2, t);
            assert!(
                (joint / product - 1.0).abs() < 1e-6,
                "({s}, {t}): {joint} vs {product}"
            );
        }
    }

    #[test]
    fn independent_drifted_density_factorises() {
        let m = PairModel::new(firm(-0.05), firm(-0.05), 0.0).unwrap();
        let eval = JointDensityEval::new(&m).unwrap();
        for &(s, t) in &[(1.0, 2.0), (3.0, 1.5), (6.0, 10.0)] {
            let joint = eval.density(s, t).unwrap();
            let product = marginal_density(&m.d1, s) * marginal_density(&m.d2, t);
            assert!(
                (joint / product - 1.0).abs() < 1e-6,
                "({s}, {t}): {joint} vs {product}"
            );
        }
    }

    #[test]
    fn exchange_symmetry() {
        let m = PairModel::new(firm(-0.05), dim(-0.02, 0.8, 1.0, 0.0), 0.4).unwrap();
        let swapped = m.swapped();
        let e1 = JointDensityEval::new(&m).unwrap();
        let e2 = JointDensityEval::new(&swapped).unwrap();
        for &(s, t) in &[(0.7, 2.0), (2.5, 0.9), (4.0, 4.5), (9.0, 3.0)] {
            let a = e1.density(s, t).unwrap();
            let b = e2.density(t, s).unwrap();
            assert!(
                (a / b - 1.0).abs() < 1e-10,
                "({s}, {t}): {a} vs {b}"
            );
        }
    }

    #[test]
    fn sign_symmetry() {
        // Negating (x0, b, mu) of either coordinate leaves f invariant.
        let base = PairModel::new(firm(-0.05), firm(-0.03), 0.4).unwrap();
        let flipped = PairModel::new(
            dim(0.05, 1.0, -(5.0f64.ln()), 0.0),
            base.d2,
            -0.4,
        )
        .unwrap();
        // Flipping coordinate 1 negates the observable correlation, so the
        // model with the same joint law carries -rho.
        let e1 = JointDensityEval::new(&base).unwrap();
        let e2 = JointDensityEval::new(&flipped).unwrap();
        for &(s, t) in &[(1.0, 2.0), (3.0, 1.2), (6.0, 6.5)] {
            let a = e1.density(s, t).unwrap();
            let b = e2.density(s, t).unwrap();
            assert!((a / b - 1.0).abs() < 1e-12, "({s}, {t})");
        }
    }

    #[test]
    fn nonnegative_everywhere_sampled() {
        let m = PairModel::new(firm(-0.05), firm(0.0), -0.5).unwrap();
        let eval = JointDensityEval::new(&m).unwrap();
        let mut s = 0.05;
        while s < 40.0 {
            let mut t = 0.05;
            while t < 40.0 {
                let v = eval.density(s, t).unwrap();
                assert!(v >= 0.0, "f({s}, {t}) = {v}");
                t *= 3.1;
            }
            s *= 3.1;
        }
    }

    #[test]
    fn zero_drift_branch_agrees_with_general_formula() {
        // Evaluate the general-drift machinery at mu = 0 by giving the
        // evaluator a vanishing but nonzero drift.
        let tiny = -1e-300;
        let m0 = PairModel::new(firm(0.0), firm(0.0), 0.3).unwrap();
        let m_eps = PairModel::new(firm(tiny), firm(tiny), 0.3).unwrap();
        let exact = JointDensityEval::new(&m0).unwrap();
        let general = JointDensityEval::new(&m_eps).unwrap();
        assert!(!general.zero_drift);
        for &(s, t) in &[(1.0, 3.0), (3.0, 1.0), (2.0, 2.5), (7.0, 8.0)] {
            let a = exact.density(s, t).unwrap();
            let b = general.density(s, t).unwrap();
            assert!(
                (a / b - 1.0).abs() < 1e-6,
                "({s}, {t}): closed {a} vs series {b}"
            );
        }
    }

    #[test]
    fn diagonal_returns_the_lower_limit() {
        let m = PairModel::new(firm(0.0), firm(0.0), 0.1).unwrap();
        let eval = JointDensityEval::new(&m).unwrap();
        let on = eval.density(2.0, 2.0).unwrap();
        let near = eval.density(2.0 * (1.0 - 1e-9), 2.0).unwrap();
        assert!((on / near - 1.0).abs() < 1e-6);
    }

    #[test]
    fn rejects_nonpositive_times() {
        let m = PairModel::new(firm(0.0), firm(0.0), 0.1).unwrap();
        let eval = JointDensityEval::new(&m).unwrap();
        assert!(eval.density(0.0, 1.0).is_err());
        assert!(eval.density(1.0, -2.0).is_err());
    }

    #[test]
    fn product_moment_independent_pair_is_one() {
        let m = PairModel::new(dim(0.0, 1.0, 0.0, -5.0), dim(0.0, 1.0, 0.0, -5.0), 0.0).unwrap();
        let spec = QuadratureSpec {
            abs_tol: 1e-6,
            rel_tol: 1e-5,
            max_subdivisions: 2000,
        };
        let v = chi2_product_moment(&m, &spec).unwrap();
        assert!((v - 1.0).abs() < 2e-3, "E = {v}");
    }

    #[test]
    fn product_moment_requires_zero_drift() {
        let m = PairModel::new(firm(-0.05), firm(0.0), 0.1).unwrap();
        assert!(chi2_product_moment(&m, &QuadratureSpec::default()).is_err());
    }
}
