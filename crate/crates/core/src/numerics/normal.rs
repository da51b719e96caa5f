//! Standard normal CDF, PDF and quantile.
//!
//! The CDF goes through Cody's rational approximations for erf/erfc, which
//! keep full relative accuracy deep into the lower tail. The quantile is
//! Acklam's rational approximation polished by one Halley step against the
//! Cody CDF; the copula mapping squares the quantile, so the extra step is
//! not optional.

use crate::error::{Error, Result};

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;
const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

// Cody's CALERF coefficient sets.
const ERF_A: [f64; 5] = [
    3.161_123_743_870_565_6e0,
    1.138_641_541_510_501_56e2,
    3.774_852_376_853_020_2e2,
    3.209_377_589_138_469_47e3,
    1.857_777_061_846_031_53e-1,
];
const ERF_B: [f64; 4] = [
    2.360_129_095_234_412_09e1,
    2.440_246_379_344_441_73e2,
    1.282_616_526_077_372_28e3,
    2.844_236_833_439_170_62e3,
];
const ERFC_C: [f64; 9] = [
    5.641_884_969_886_700_89e-1,
    8.883_149_794_388_375_94e0,
    6.611_919_063_714_162_95e1,
    2.986_351_381_974_001_31e2,
    8.819_522_212_417_690_9e2,
    1.712_047_612_634_070_58e3,
    2.051_078_377_826_071_47e3,
    1.230_339_354_797_997_25e3,
    2.153_115_354_744_038_46e-8,
];
const ERFC_D: [f64; 8] = [
    1.574_492_611_070_983_47e1,
    1.176_939_508_913_124_99e2,
    5.371_811_018_620_098_58e2,
    1.621_389_574_566_690_19e3,
    3.290_799_235_733_459_63e3,
    4.362_619_090_143_247_16e3,
    3.439_367_674_143_721_64e3,
    1.230_339_354_803_749_42e3,
];
const ERFC_P: [f64; 6] = [
    3.053_266_349_612_323_44e-1,
    3.603_448_999_498_044_39e-1,
    1.257_817_261_112_292_46e-1,
    1.608_378_514_874_227_66e-2,
    6.587_491_615_298_378_03e-4,
    1.631_538_713_730_209_78e-2,
];
const ERFC_Q: [f64; 5] = [
    2.568_520_192_289_822_42e0,
    1.872_952_849_923_460_47e0,
    5.279_051_029_514_284_12e-1,
    6.051_834_131_244_131_91e-2,
    2.335_204_976_268_691_85e-3,
];
const ONE_OVER_SQRT_PI: f64 = 5.641_895_835_477_562_9e-1;

fn erf_small(x: f64) -> f64 {
    let y2 = x * x;
    let mut num = ERF_A[4] * y2;
    let mut den = y2;
    for i in 0..3 {
        num = (num + ERF_A[i]) * y2;
        den = (den + ERF_B[i]) * y2;
    }
    x * (num + ERF_A[3]) / (den + ERF_B[3])
}

/// Complementary error function with full relative accuracy for `x > 0`.
fn erfc(x: f64) -> f64 {
    let y = x.abs();
    if y <= 0.46875 {
        return 1.0 - erf_small(x);
    }
    let mut result = if y <= 4.0 {
        let mut num = ERFC_C[8] * y;
        let mut den = y;
        for i in 0..7 {
            num = (num + ERFC_C[i]) * y;
            den = (den + ERFC_D[i]) * y;
        }
        (num + ERFC_C[7]) / (den + ERFC_D[7])
    } else if y < 26.6 {
        let ysq = 1.0 / (y * y);
        let mut num = ERFC_P[5] * ysq;
        let mut den = ysq;
        for i in 0..4 {
            num = (num + ERFC_P[i]) * ysq;
            den = (den + ERFC_Q[i]) * ysq;
        }
        let r = ysq * (num + ERFC_P[4]) / (den + ERFC_Q[4]);
        (ONE_OVER_SQRT_PI - r) / y
    } else {
        0.0
    };
    if result > 0.0 {
        // exp(-y^2) split into an exactly representable part plus a small
        // correction, per Cody, to avoid losing digits in the argument.
        let ysq = (y * 16.0).trunc() / 16.0;
        let del = (y - ysq) * (y + ysq);
        result *= (-ysq * ysq).exp() * (-del).exp();
    }
    if x < 0.0 {
        2.0 - result
    } else {
        result
    }
}

/// Standard normal density.
#[inline]
pub fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / SQRT_2PI
}

/// Standard normal CDF. Saturates smoothly in the tails and keeps relative
/// accuracy for `z -> -inf` down to the underflow threshold near `-37.5`.
#[inline]
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z * FRAC_1_SQRT_2)
}

// Acklam's rational approximation to the normal quantile.
const QNT_A: [f64; 6] = [
    -3.969_683_028_665_376e1,
    2.209_460_984_245_205e2,
    -2.759_285_104_469_687e2,
    1.383_577_518_672_69e2,
    -3.066_479_806_614_716e1,
    2.506_628_277_459_239e0,
];
const QNT_B: [f64; 5] = [
    -5.447_609_879_822_406e1,
    1.615_858_368_580_409e2,
    -1.556_989_798_598_866e2,
    6.680_131_188_771_972e1,
    -1.328_068_155_288_572e1,
];
const QNT_C: [f64; 6] = [
    -7.784_894_002_430_293e-3,
    -3.223_964_580_411_365e-1,
    -2.400_758_277_161_838e0,
    -2.549_732_539_343_734e0,
    4.374_664_141_464_968e0,
    2.938_163_982_698_783e0,
];
const QNT_D: [f64; 4] = [
    7.784_695_709_041_462e-3,
    3.224_671_290_700_398e-1,
    2.445_134_137_142_996e0,
    3.754_408_661_907_416e0,
];
const P_LOW: f64 = 0.02425;

fn acklam(p: f64) -> f64 {
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((QNT_C[0] * q + QNT_C[1]) * q + QNT_C[2]) * q + QNT_C[3]) * q + QNT_C[4]) * q
            + QNT_C[5])
            / ((((QNT_D[0] * q + QNT_D[1]) * q + QNT_D[2]) * q + QNT_D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((QNT_A[0] * r + QNT_A[1]) * r + QNT_A[2]) * r + QNT_A[3]) * r + QNT_A[4]) * r
            + QNT_A[5])
            * q
            / (((((QNT_B[0] * r + QNT_B[1]) * r + QNT_B[2]) * r + QNT_B[3]) * r + QNT_B[4]) * r
                + 1.0)
    } else {
        -acklam(1.0 - p)
    }
}

/// Standard normal quantile `Phi^{-1}(p)` for `p` in the open unit interval.
pub fn std_normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!(
            "normal quantile requires p in (0, 1), got {p}"
        )));
    }
    let mut x = acklam(p);
    // One Halley step against the Cody CDF.
    let e = std_normal_cdf(x) - p;
    let u = e / std_normal_pdf(x);
    if u.is_finite() {
        x -= u / (1.0 + 0.5 * x * u);
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Independent oracle: erf by its ascending power series, accurate to
    // ~1e-16 for |x| <= 3 where it is used.
    fn erf_series(x: f64) -> f64 {
        let mut term = x;
        let mut sum = x;
        for n in 1..200 {
            let nf = n as f64;
            term *= -x * x / nf;
            let contrib = term / (2.0 * nf + 1.0);
            sum += contrib;
            if contrib.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        sum * 2.0 / std::f64::consts::PI.sqrt()
    }

    fn phi_oracle(z: f64) -> f64 {
        0.5 * (1.0 + erf_series(z * FRAC_1_SQRT_2))
    }

    #[test]
    fn cdf_matches_series_oracle() {
        // Frozen from the series oracle; re-derived below as well.
        assert!((std_normal_cdf(1.0) - 0.841_344_746_068_542_9).abs() < 1e-14);
        for z in [-3.0, -2.2, -1.0, -0.3, 0.0, 0.4, 1.0, 1.7, 2.3, 3.0] {
            assert!(
                (std_normal_cdf(z) - phi_oracle(z)).abs() < 1e-15,
                "z = {z}"
            );
        }
    }

    #[test]
    fn cdf_at_zero_is_half() {
        assert_eq!(std_normal_cdf(0.0), 0.5);
    }

    #[test]
    fn cdf_symmetry() {
        for i in 0..=160 {
            let z = -8.0 + i as f64 * 0.1;
            let s = std_normal_cdf(z) + std_normal_cdf(-z);
            assert!((s - 1.0).abs() <= 1e-14, "z = {z}, sum = {s:e}");
        }
    }

    #[test]
    fn cdf_monotone() {
        let mut prev = 0.0;
        for i in 0..2000 {
            let z = -10.0 + i as f64 * 0.01;
            let p = std_normal_cdf(z);
            assert!(p >= prev, "not monotone at z = {z}");
            prev = p;
        }
    }

    #[test]
    fn cdf_lower_tail_relative_accuracy() {
        // Phi(-10) = 7.619853024160527e-24 (series-free reference via the
        // error-function asymptotics; checked against the ratio bound).
        let p = std_normal_cdf(-10.0);
        assert!((p / 7.619_853_024_160_527e-24 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quantile_known_values() {
        // 0.6744897501960817 from bisecting the erf series oracle.
        let x = std_normal_quantile(0.75).unwrap();
        assert!((x - 0.674_489_750_196_081_7).abs() < 1e-13);
        assert_eq!(std_normal_quantile(0.5).unwrap(), 0.0);
    }

    #[test]
    fn quantile_bisection_oracle() {
        // Bisection against the series oracle at a handful of probabilities.
        for &p in &[0.1, 0.25, 0.6, 0.9, 0.975] {
            let (mut lo, mut hi) = (-10.0f64, 10.0f64);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if phi_oracle(mid) < p {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let x = std_normal_quantile(p).unwrap();
            assert!((x - 0.5 * (lo + hi)).abs() < 1e-12, "p = {p}");
        }
    }

    #[test]
    fn quantile_cdf_round_trip() {
        // p -> x -> p, absolute, across the contract range.
        let mut p = 1e-12;
        while p < 1.0 {
            let x = std_normal_quantile(p).unwrap();
            assert!(
                (std_normal_cdf(x) - p).abs() < 1e-9,
                "p = {p:e}, x = {x}"
            );
            p *= 3.7;
        }
        for i in 1..100 {
            let p = i as f64 / 100.0;
            let x = std_normal_quantile(p).unwrap();
            assert!((std_normal_cdf(x) - p).abs() < 1e-13);
        }
        // x -> p -> x where the stored CDF value still pins x down.
        for &x in &[-30.0, -12.0, -5.0, -2.3, -0.7, 0.0, 1.3, 2.3, 4.0, 5.0] {
            let back = std_normal_quantile(std_normal_cdf(x)).unwrap();
            assert!((back - x).abs() < 1e-9, "x = {x}, back = {back}");
        }
    }

    #[test]
    fn quantile_rejects_out_of_domain() {
        assert!(std_normal_quantile(0.0).is_err());
        assert!(std_normal_quantile(1.0).is_err());
        assert!(std_normal_quantile(-0.2).is_err());
        assert!(std_normal_quantile(f64::NAN).is_err());
    }
}
