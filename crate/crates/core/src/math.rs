//! Scalar special functions and the Brent root finder.
//!
//! Everything downstream (mixture densities, CRPS, truncated CDFs) is built on
//! [`erf`]/[`erfc`], so the normal CDF here is the single numerical foundation
//! for every probability the crate computes.

#![allow(clippy::excessive_precision)]

use crate::error::{Error, Result};

pub const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Default iteration cap for [`brent_root`].
pub const BRENT_MAX_ITER: usize = 200;

/// A probability vector: nonnegative entries summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexVector(Vec<f64>);

impl SimplexVector {
    /// Validates `weights` as a point on the probability simplex.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Domain("simplex vector must be nonempty".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Domain(format!("simplex entries must be finite and nonnegative: {weights:?}")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("simplex entries sum to {sum}, not 1")));
        }
        Ok(Self(weights))
    }

    /// Uniform weights over `k` components.
    pub fn uniform(k: usize) -> Self {
        Self(vec![1.0 / k as f64; k])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Wraps softmax output, which is on the simplex up to rounding.
    pub(crate) fn from_softmax(weights: Vec<f64>) -> Self {
        Self(weights)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Index<usize> for SimplexVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

// ---------------------------------------------------------------------------
// Error function.
//
// Rational approximations from FreeBSD msun s_erf.c:
//
// Copyright (C) 1993 by Sun Microsystems, Inc. All rights reserved.
// Developed at SunPro, a Sun Microsystems, Inc. business.
// Permission to use, copy, modify, and distribute this software is freely
// granted, provided that this notice is preserved.
// ---------------------------------------------------------------------------

const ERX: f64 = 8.45062911510467529297e-01;
const EFX: f64 = 1.28379167095512586316e-01;

const PP: [f64; 5] = [
    1.28379167095512558561e-01,
    -3.25042107247001499370e-01,
    -2.84817495755985104766e-02,
    -5.77027029648944159157e-03,
    -2.37630166566501626084e-05,
];
const QQ: [f64; 5] = [
    3.97917223959155352819e-01,
    6.50222499887672944485e-02,
    5.08130628187576562776e-03,
    1.32494738004321644526e-04,
    -3.96022827877536812320e-06,
];
const PA: [f64; 7] = [
    -2.36211856075265944077e-03,
    4.14856118683748331666e-01,
    -3.72207876035701323847e-01,
    3.18346619901161753674e-01,
    -1.10894694282396677476e-01,
    3.54783043256182359371e-02,
    -2.16637559486879084300e-03,
];
const QA: [f64; 6] = [
    1.06420880400844228286e-01,
    5.40397917702171048937e-01,
    7.18286544141962662868e-02,
    1.26171219808761642112e-01,
    1.36370839120290507362e-02,
    1.19844998467991074170e-02,
];
const RA: [f64; 8] = [
    -9.86494403484714822705e-03,
    -6.93858572707181764372e-01,
    -1.05586262253232909814e+01,
    -6.23753324503260060396e+01,
    -1.62396669462573470355e+02,
    -1.84605092906711035994e+02,
    -8.12874355063065934246e+01,
    -9.81432934416914548592e+00,
];
const SA: [f64; 8] = [
    1.96512716674392571292e+01,
    1.37657754143519042600e+02,
    4.34565877475229228821e+02,
    6.45387271733267880336e+02,
    4.29008140027567833386e+02,
    1.08635005541779435134e+02,
    6.57024977031928170135e+00,
    -6.04244152148580987438e-02,
];
const RB: [f64; 7] = [
    -9.86494292470009928597e-03,
    -7.99283237680523006574e-01,
    -1.77579549177547519889e+01,
    -1.60636384855821916062e+02,
    -6.37566443368389627722e+02,
    -1.02509513161107724954e+03,
    -4.83519191608651397019e+02,
];
const SB: [f64; 7] = [
    3.03380607434824582924e+01,
    3.25792512996573918826e+02,
    1.53672958608443695994e+03,
    3.19985821950859553908e+03,
    2.55305040643316442583e+03,
    4.74528541206955367215e+02,
    -2.24409524465858183362e+01,
];

/// Horner evaluation of `c[0] + c[1] x + ...`.
#[inline]
fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci)
}

/// `1 + c[0] x + c[1] x^2 + ...`
#[inline]
fn poly1(c: &[f64], x: f64) -> f64 {
    1.0 + x * poly(c, x)
}

/// `erfc(x)` for `x >= 1.25` via the asymptotic rational forms.
#[inline]
fn erfc_tail(x: f64) -> f64 {
    if x >= 28.0 {
        return 0.0;
    }
    let s = 1.0 / (x * x);
    let (r, q) = if x < 1.0 / 0.35 {
        (poly(&RA, s), poly1(&SA, s))
    } else {
        (poly(&RB, s), poly1(&SB, s))
    };
    // Split x so that z*z is exact.
    let z = f64::from_bits(x.to_bits() & 0xffff_ffff_0000_0000);
    (-z * z - 0.5625).exp() * ((z - x) * (z + x) + r / q).exp() / x
}

fn erf_unchecked(x: f64) -> f64 {
    let ax = x.abs();
    let v = if ax < 0.84375 {
        if ax < 3.725_290_298_461_914e-9 {
            ax + EFX * ax
        } else {
            let z = ax * ax;
            ax + ax * (poly(&PP, z) / poly1(&QQ, z))
        }
    } else if ax < 1.25 {
        let s = ax - 1.0;
        ERX + poly(&PA, s) / poly1(&QA, s)
    } else if ax >= 6.0 {
        1.0
    } else {
        1.0 - erfc_tail(ax)
    };
    v.copysign(x)
}

fn erfc_unchecked(x: f64) -> f64 {
    let ax = x.abs();
    if ax < 0.84375 {
        let t = if ax < 1.387_778_780_781_445_7e-17 {
            ax
        } else {
            let z = ax * ax;
            let y = poly(&PP, z) / poly1(&QQ, z);
            if ax < 0.25 {
                ax + ax * y
            } else {
                0.5 + (ax * y + (ax - 0.5))
            }
        };
        return if x < 0.0 { 1.0 + t } else { 1.0 - t };
    }
    if ax < 1.25 {
        let s = ax - 1.0;
        let p = poly(&PA, s) / poly1(&QA, s);
        return if x < 0.0 { 1.0 + ERX + p } else { 1.0 - ERX - p };
    }
    let tail = erfc_tail(ax);
    if x < 0.0 {
        2.0 - tail
    } else {
        tail
    }
}

/// `exp(x²)·erfc(x)` for `x ≥ 0`, free of underflow.
pub(crate) fn erfcx_nonneg(x: f64) -> f64 {
    if x < 1.25 {
        return (x * x).exp() * erfc_unchecked(x);
    }
    if x < 28.0 {
        let s = 1.0 / (x * x);
        let (r, q) = if x < 1.0 / 0.35 {
            (poly(&RA, s), poly1(&SA, s))
        } else {
            (poly(&RB, s), poly1(&SB, s))
        };
        return (r / q - 0.5625).exp() / x;
    }
    // asymptotic series Σ (−1)^k (2k−1)!! s^k; the first omitted term is
    // below 1e-19 relative for x ≥ 28
    let s = 1.0 / (2.0 * x * x);
    let series = (1..=8).rev().fold(1.0, |acc, k| 1.0 - (2 * k - 1) as f64 * s * acc);
    series / (x * std::f64::consts::PI.sqrt())
}

/// Scaled complementary error function `exp(x²)·erfc(x)`.
pub fn erfcx(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::Domain(format!("erfcx of non-finite value {x}")));
    }
    if x >= 0.0 {
        Ok(erfcx_nonneg(x))
    } else {
        Ok(2.0 * (x * x).exp() - erfcx_nonneg(-x))
    }
}

/// The error function. Non-finite input is a domain error.
pub fn erf(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::Domain(format!("erf of non-finite value {x}")));
    }
    Ok(erf_unchecked(x))
}

/// The complementary error function `1 - erf(x)`, accurate in the upper tail.
pub fn erfc(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::Domain(format!("erfc of non-finite value {x}")));
    }
    Ok(erfc_unchecked(x))
}

/// Standard normal CDF, `½(1 + erf(x/√2))`.
///
/// Evaluated as `½ erfc(−x/√2)`, the same quantity written so that the lower
/// tail keeps full relative precision. Infinite arguments saturate to 0 or 1;
/// NaN propagates.
#[inline]
pub fn std_normal_cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x.is_infinite() {
        return if x > 0.0 { 1.0 } else { 0.0 };
    }
    0.5 * erfc_unchecked(-x * std::f64::consts::FRAC_1_SQRT_2)
}

/// Standard normal density.
#[inline]
pub fn std_normal_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// `ln(1 + e^x)`, stable for large |x|.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Logistic sigmoid, the derivative of [`softplus`].
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Mish activation: `x · tanh(softplus(x))`.
#[inline]
pub fn mish(x: f64) -> f64 {
    x * softplus(x).tanh()
}

/// Analytic derivative of [`mish`].
///
/// `d/dx [x tanh(sp(x))] = tanh(sp(x)) + x · sech²(sp(x)) · sigmoid(x)`
#[inline]
pub fn mish_prime(x: f64) -> f64 {
    let t = softplus(x).tanh();
    t + x * (1.0 - t * t) * sigmoid(x)
}

/// Mish value and derivative in one pass.
#[inline]
pub fn mish_with_prime(x: f64) -> (f64, f64) {
    let t = softplus(x).tanh();
    (x * t, t + x * (1.0 - t * t) * sigmoid(x))
}

/// Softmax with max-subtraction.
pub fn softmax(logits: &[f64]) -> Result<SimplexVector> {
    if logits.is_empty() {
        return Err(Error::Domain("softmax of empty vector".into()));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("softmax of non-finite logits {logits:?}")));
    }
    Ok(SimplexVector::from_softmax(softmax_unchecked(logits)))
}

pub(crate) fn softmax_unchecked(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= sum);
    out
}

/// `ln Σ exp(v_i)`, stabilized.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|&v| (v - max).exp()).sum::<f64>().ln()
}

/// Default absolute tolerance for [`brent_root`] on `[lo, hi]`.
pub fn default_brent_tol(lo: f64, hi: f64) -> f64 {
    1e-12 * (hi - lo).abs().max(1.0)
}

/// Brent's method (bisection + secant + inverse quadratic interpolation).
///
/// Requires `f(lo)` and `f(hi)` of opposite sign (or one of them zero). The
/// returned point lies in a bracket no wider than about `tol + 4ε|x|`.
pub fn brent_root<F>(mut f: F, lo: f64, hi: f64, tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    brent_root_with_cap(&mut f, lo, hi, tol, BRENT_MAX_ITER)
}

pub fn brent_root_with_cap<F>(f: &mut F, lo: f64, hi: f64, tol: f64, max_iter: usize) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    if !(tol >= 0.0) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Domain(format!("invalid Brent arguments lo={lo} hi={hi} tol={tol}")));
    }
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (f(a), f(b));
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if !(fa.is_finite() && fb.is_finite()) || fa.signum() == fb.signum() {
        return Err(Error::Bracket { lo, hi, f_lo: fa, f_hi: fb });
    }

    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;

    for _ in 0..max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }

        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol;
        let m = 0.5 * (c - b);
        if m.abs() <= tol1 || fb == 0.0 {
            return Ok(b);
        }

        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                // secant
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                // inverse quadratic interpolation
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol1 * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = d;
            }
        } else {
            d = m;
            e = d;
        }

        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(m) };
        fb = f(b);
        if !fb.is_finite() {
            return Err(Error::Domain(format!("function returned {fb} at x={b}")));
        }
    }
    Err(Error::Convergence { iterations: max_iter })
}
