//! Numerical building blocks: adaptive Gauss-Kronrod quadrature, bracketed
//! root finding on monotone functions and finite-difference helpers.

use crate::error::{Error, Result};

// 15-point Kronrod abscissae on [-1, 1] (non-negative half), with the
// embedded 7-point Gauss rule at the odd indices.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
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

/// Tolerance and budget for [`integrate`].
#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 1e-12,
            max_intervals: 2000,
        }
    }
}

impl QuadOptions {
    pub fn with_abs_tol(abs_tol: f64) -> Self {
        Self {
            abs_tol,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

fn kronrod<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Segment {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for (j, (&x, &w)) in XGK.iter().zip(WGK.iter()).take(7).enumerate() {
        let dx = half * x;
        let pair = f(center - dx) + f(center + dx);
        kronrod += w * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    Segment {
        a,
        b,
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs(),
    }
}

/// Globally adaptive 15-point Gauss-Kronrod quadrature of `f` over `[a, b]`.
///
/// The worst segment is bisected until the summed error estimate falls below
/// `max(abs_tol, rel_tol * |I|)`. The integrand is never evaluated at the
/// endpoints, so integrable endpoint singularities are tolerated.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, opts: QuadOptions) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    if b < a {
        return integrate(f, b, a, opts).map(|v| -v);
    }
    let mut segments = vec![kronrod(&mut f, a, b)];
    loop {
        let total: f64 = segments.iter().map(|s| s.value).sum();
        let error: f64 = segments.iter().map(|s| s.error).sum();
        if !total.is_finite() || !error.is_finite() {
            return Err(Error::Quadrature {
                estimate: total,
                error,
            });
        }
        if error <= opts.abs_tol.max(opts.rel_tol * total.abs()) {
            return Ok(total);
        }
        if segments.len() >= opts.max_intervals {
            return Err(Error::Quadrature {
                estimate: total,
                error,
            });
        }
        let (worst, _) = segments
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, s)| {
                if s.error > acc.1 {
                    (i, s.error)
                } else {
                    acc
                }
            });
        let seg = segments.swap_remove(worst);
        let mid = 0.5 * (seg.a + seg.b);
        if mid <= seg.a || mid >= seg.b {
            // Interval cannot be split further in floating point.
            return Err(Error::Quadrature {
                estimate: total,
                error,
            });
        }
        segments.push(kronrod(&mut f, seg.a, mid));
        segments.push(kronrod(&mut f, mid, seg.b));
    }
}

/// Integrates over `[a, b]`, restarting the adaptive rule at every interior
/// breakpoint (kinks of piecewise definitions).
pub fn integrate_with_breaks<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    opts: QuadOptions,
) -> Result<f64> {
    let mut total = 0.0;
    let mut lo = a;
    for &p in breaks.iter().filter(|&&p| p > a && p < b) {
        total += integrate(&mut f, lo, p, opts)?;
        lo = p;
    }
    total += integrate(&mut f, lo, b, opts)?;
    Ok(total)
}

/// Finds `x` in `[lo, hi]` with `g(x) = 0` for a nondecreasing `g` with
/// `g(lo) <= 0 <= g(hi)`.
///
/// Illinois-modified false position, falling back to bisection whenever the
/// bracket fails to halve. Stops once `|g(x)| <= f_tol` or the bracket has
/// collapsed to a few ulps.
pub fn solve_increasing<G: FnMut(f64) -> Result<f64>>(
    mut g: G,
    mut lo: f64,
    mut hi: f64,
    f_tol: f64,
) -> Result<f64> {
    let mut g_lo = g(lo)?;
    let mut g_hi = g(hi)?;
    if g_lo > 0.0 || g_hi < 0.0 {
        return Err(Error::Bracket(format!(
            "g({lo}) = {g_lo}, g({hi}) = {g_hi} do not bracket a root"
        )));
    }
    if g_lo == 0.0 {
        return Ok(lo);
    }
    if g_hi == 0.0 {
        return Ok(hi);
    }
    let mut side = 0i8;
    for _ in 0..400 {
        let width = hi - lo;
        let mut x = lo - g_lo * width / (g_hi - g_lo);
        if !(x > lo && x < hi) {
            x = 0.5 * (lo + hi);
        }
        let gx = g(x)?;
        if gx.abs() <= f_tol {
            return Ok(x);
        }
        if gx < 0.0 {
            lo = x;
            g_lo = gx;
            if side == -1 {
                g_hi *= 0.5;
            }
            side = -1;
        } else {
            hi = x;
            g_hi = gx;
            if side == 1 {
                g_lo *= 0.5;
            }
            side = 1;
        }
        if hi - lo > 0.5 * width {
            // Slow false-position step: force a bisection.
            let mid = 0.5 * (lo + hi);
            let gm = g(mid)?;
            if gm.abs() <= f_tol {
                return Ok(mid);
            }
            if gm < 0.0 {
                lo = mid;
                g_lo = gm;
            } else {
                hi = mid;
                g_hi = gm;
            }
            side = 0;
        }
        if hi - lo <= 4.0 * f64::EPSILON * lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE) {
            return Ok(if g_hi.abs() < g_lo.abs() { hi } else { lo });
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Central difference step `eps^(1/3) * max(1, |x|)`.
pub fn central_step(x: f64) -> f64 {
    f64::EPSILON.cbrt() * x.abs().max(1.0)
}

/// First derivative of `f` at `x`, central where `x - h >= floor`, forward otherwise.
pub fn derivative<F: FnMut(f64) -> Result<f64>>(mut f: F, x: f64, floor: f64) -> Result<f64> {
    let h = central_step(x);
    if x - h >= floor {
        Ok((f(x + h)? - f(x - h)?) / (2.0 * h))
    } else {
        // Second-order forward stencil.
        let f0 = f(x)?;
        let f1 = f(x + h)?;
        let f2 = f(x + 2.0 * h)?;
        Ok((-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * h))
    }
}

/// Log-spaced values from `lo` to `hi` inclusive.
pub fn geomspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let ratio = (hi / lo).ln() / (count - 1) as f64;
            (0..count)
                .map(|k| {
                    if k == count - 1 {
                        hi
                    } else {
                        lo * (ratio * k as f64).exp()
                    }
                })
                .collect()
        }
    }
}
