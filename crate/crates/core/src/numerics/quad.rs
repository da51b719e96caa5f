//! Globally adaptive Gauss-Kronrod quadrature.
//!
//! One 15/7-point panel rule plus worst-panel bisection, in the QUADPACK
//! mould. Infinite upper limits are folded onto (0, 1) with r = u/(1-u), so
//! every integral in the crate runs through the same panel scheme. The
//! 2-D driver splits the quadrant on the diagonal s = t, where the joint
//! densities switch branches, and iterates the 1-D rule.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

/// Tolerances and budget for the adaptive scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            abs_tol: 1e-9,
            rel_tol: 1e-8,
            max_subdivisions: 2000,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0) || !(self.rel_tol > 0.0) {
            return Err(Error::Domain(
                "quadrature tolerances must be strictly positive".into(),
            ));
        }
        if self.max_subdivisions < 1 {
            return Err(Error::Domain("max_subdivisions must be >= 1".into()));
        }
        Ok(())
    }

    /// Tightened copy used for inner integrals of nested rules.
    pub(crate) fn tightened(&self, factor: f64) -> Self {
        Self {
            abs_tol: self.abs_tol * factor,
            rel_tol: self.rel_tol * factor,
            max_subdivisions: self.max_subdivisions,
        }
    }
}

// 15-point Kronrod abscissae (positive half) with the embedded 7-point
// Gauss rule on the odd indices.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_838_258_730,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// QUADPACK-style error rescaling from the raw |K15 - G7| difference.
fn rescale_error(err: f64, res_abs: f64, res_asc: f64) -> f64 {
    let mut scaled = err.abs();
    if res_asc != 0.0 && scaled != 0.0 {
        let scale = (200.0 * scaled / res_asc).powf(1.5);
        scaled = if scale < 1.0 { res_asc * scale } else { res_asc };
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        let min_err = 50.0 * f64::EPSILON * res_abs;
        if min_err > scaled {
            scaled = min_err;
        }
    }
    scaled
}

fn kronrod15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let f_center = f(center);

    let mut fv1 = [0.0f64; 8];
    let mut fv2 = [0.0f64; 8];
    let mut res_gauss = f_center * WG[3];
    let mut res_kronrod = f_center * WGK[7];
    let mut res_abs = res_kronrod.abs();

    for j in 0..7 {
        let abscissa = half * XGK[j];
        let f1 = f(center - abscissa);
        let f2 = f(center + abscissa);
        fv1[j] = f1;
        fv2[j] = f2;
        res_kronrod += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_gauss += WG[j / 2] * (f1 + f2);
        }
    }

    let mean = 0.5 * res_kronrod;
    let mut res_asc = WGK[7] * (f_center - mean).abs();
    for j in 0..7 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }

    let integral = res_kronrod * half;
    let err = rescale_error((res_kronrod - res_gauss) * half, res_abs * half.abs(), res_asc * half.abs());
    (integral, err)
}

#[derive(Debug)]
struct Panel {
    a: f64,
    b: f64,
    integral: f64,
    error: f64,
    seq: u64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error && self.seq == other.seq
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        // Largest error first; sequence number breaks ties deterministically.
        self.error
            .total_cmp(&other.error)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

fn adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, spec: &QuadratureSpec) -> Result<f64> {
    let mut seq = 0u64;
    let mut total = 0.0f64;
    let mut total_err = 0.0f64;
    let mut push = |heap: &mut BinaryHeap<Panel>, total: &mut f64, err: &mut f64, a: f64, b: f64| {
        let (integral, error) = kronrod15(f, a, b);
        seq += 1;
        *total += integral;
        *err += error;
        heap.push(Panel {
            a,
            b,
            integral,
            error,
            seq,
        });
    };

    let mut heap = BinaryHeap::new();
    push(&mut heap, &mut total, &mut total_err, a, b);

    let mut subdivisions = 0usize;
    // A panel is refinable while its midpoint is representably distinct
    // from both endpoints; panels hugging an endpoint singularity at 0 may
    // legitimately shrink to denormal widths.
    let refinable = |p: &Panel| p.b - p.a > f64::EPSILON * p.a.abs().max(p.b.abs());

    loop {
        if !total.is_finite() {
            return Err(Error::QuadratureNonConvergence {
                best: total,
                error_bound: f64::INFINITY,
            });
        }
        let tol = spec.abs_tol.max(spec.rel_tol * total.abs());
        if total_err <= tol {
            return Ok(total);
        }
        if subdivisions >= spec.max_subdivisions {
            return Err(Error::QuadratureNonConvergence {
                best: total,
                error_bound: total_err,
            });
        }
        // Worst panel first; panels too narrow to refine in double
        // precision keep their contribution and leave the queue.
        let worst = loop {
            match heap.pop() {
                None => {
                    return Err(Error::QuadratureNonConvergence {
                        best: total,
                        error_bound: total_err,
                    })
                }
                Some(p) if !refinable(&p) => continue,
                Some(p) => break p,
            }
        };
        total -= worst.integral;
        total_err -= worst.error;
        let mid = 0.5 * (worst.a + worst.b);
        push(&mut heap, &mut total, &mut total_err, worst.a, mid);
        push(&mut heap, &mut total, &mut total_err, mid, worst.b);
        subdivisions += 1;
    }
}

/// Adaptive integral of `f` over `(a, b)`; `b` may be `f64::INFINITY`, in
/// which case the tail is folded onto (0, 1) with `r = a + u/(1-u)`.
pub fn integrate_1d<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, spec: &QuadratureSpec) -> Result<f64> {
    spec.validate()?;
    if !a.is_finite() {
        return Err(Error::Domain("lower integration limit must be finite".into()));
    }
    if b.is_finite() {
        if b < a {
            return Err(Error::Domain("integration limits out of order".into()));
        }
        if b == a {
            return Ok(0.0);
        }
        adaptive(&f, a, b, spec)
    } else {
        let g = |u: f64| {
            let om = 1.0 - u;
            let r = a + u / om;
            f(r) / (om * om)
        };
        adaptive(&g, 0.0, 1.0, spec)
    }
}

/// Adaptive integral of `f` over the open quadrant `(0, inf)^2`, split into
/// the two triangles on either side of the diagonal `s = t`.
///
/// Each triangle is parameterised by the earlier time and the positive gap
/// to the later one, so the diagonal becomes the inner integral's left
/// endpoint and each axis folds onto (0, 1) independently.
pub fn integrate_2d<F: Fn(f64, f64) -> f64>(f: F, spec: &QuadratureSpec) -> Result<f64> {
    spec.validate()?;
    let lower = integrate_triangle(&|s, t| f(s, t), spec)?;
    let upper = integrate_triangle(&|s, t| f(t, s), spec)?;
    Ok(lower + upper)
}

// Integral of f over {0 < s < t}, with f evaluated as f(s, s + gap).
fn integrate_triangle<F: Fn(f64, f64) -> f64>(f: &F, spec: &QuadratureSpec) -> Result<f64> {
    use std::cell::Cell;
    let inner_spec = spec.tightened(0.25);
    let poison: Cell<Option<Error>> = Cell::new(None);
    let outer = integrate_1d(
        |s| {
            match integrate_1d(|gap| f(s, s + gap), 0.0, f64::INFINITY, &inner_spec) {
                Ok(v) => v,
                Err(e) => {
                    poison.set(Some(e));
                    0.0
                }
            }
        },
        0.0,
        f64::INFINITY,
        spec,
    );
    if let Some(e) = poison.take() {
        return Err(e);
    }
    outer
}
