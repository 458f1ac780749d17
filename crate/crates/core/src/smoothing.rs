//! The logistic smoothing family `F(alpha * x) = 1 / (1 + exp(-alpha * x))`.
//!
//! Every evaluation goes through `exp(-|z|)`, so the exponential argument is
//! never positive and the functions saturate to exactly 0 or 1 instead of
//! overflowing.

use crate::error::{Error, Result};

/// `sup_z |d^2/dz^2 F(z)| = 1 / (6 sqrt 3)`, attained at `F(z) = 1/2 +- 1/(2 sqrt 3)`.
pub const LOGISTIC_SECOND_SUP: f64 = 0.096_225_044_864_937_63;

/// Unit-scale logistic `1 / (1 + e^{-z})`.
#[inline]
pub fn logistic(z: f64) -> f64 {
    let e = (-z.abs()).exp();
    if z >= 0.0 {
        1.0 / (1.0 + e)
    } else {
        e / (1.0 + e)
    }
}

/// Unit-scale logistic derivative `1 / (e^z + e^{-z} + 2)`.
#[inline]
pub fn logistic_prime(z: f64) -> f64 {
    let e = (-z.abs()).exp();
    let s = 1.0 + e;
    e / (s * s)
}

/// Unit-scale logistic second derivative `F'(z) (1 - 2 F(z))`.
#[inline]
pub fn logistic_second(z: f64) -> f64 {
    let e = (-z.abs()).exp();
    let s = 1.0 + e;
    // 1 - 2F(z) = (e - 1)/(1 + e) for z >= 0, mirrored for z < 0.
    let odd = (e - 1.0) / s;
    let v = e / (s * s) * odd;
    if z >= 0.0 {
        v
    } else {
        -v
    }
}

/// `exp(x)` for `x <= 0`, branch-free so loops over it vectorize. Inputs
/// below -700 return `exp(-700)`; relative error elsewhere is a few ulp.
#[inline(always)]
pub(crate) fn exp_nonpositive(x: f64) -> f64 {
    const LOG2E: f64 = std::f64::consts::LOG2_E;
    const LN2_HI: f64 = 6.931_471_803_691_238e-1;
    const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;
    const SHIFTER: f64 = 6_755_399_441_055_744.0; // 1.5 * 2^52
    let x = x.max(-700.0);
    let t = x * LOG2E + SHIFTER;
    let n = t - SHIFTER;
    let r = (x - n * LN2_HI) - n * LN2_LO;
    // Taylor polynomial on |r| <= ln2/2, degree 12.
    let mut p = 1.0 / 479_001_600.0;
    p = p * r + 1.0 / 39_916_800.0;
    p = p * r + 1.0 / 3_628_800.0;
    p = p * r + 1.0 / 362_880.0;
    p = p * r + 1.0 / 40_320.0;
    p = p * r + 1.0 / 5_040.0;
    p = p * r + 1.0 / 720.0;
    p = p * r + 1.0 / 120.0;
    p = p * r + 1.0 / 24.0;
    p = p * r + 1.0 / 6.0;
    p = p * r + 0.5;
    p = p * r + 1.0;
    p = p * r + 1.0;
    // t's low mantissa bits hold n as a two's-complement integer.
    let n_bits = t.to_bits().wrapping_add(1023) << 52;
    p * f64::from_bits(n_bits)
}

/// Unit-scale logistic derivative through [`exp_nonpositive`].
#[inline(always)]
pub(crate) fn logistic_prime_fast(z: f64) -> f64 {
    let e = exp_nonpositive(-z.abs());
    let s = 1.0 + e;
    e / (s * s)
}

/// Unit-scale logistic through [`exp_nonpositive`].
#[inline(always)]
pub(crate) fn logistic_fast(z: f64) -> f64 {
    let e = exp_nonpositive(-z.abs());
    let hi = 1.0 / (1.0 + e);
    let lo = e * hi;
    // Written as a select rather than a branch; the sign of z is unpredictable.
    let pick = -((z >= 0.0) as i64) as u64;
    f64::from_bits((hi.to_bits() & pick) | (lo.to_bits() & !pick))
}

/// Sigmoid with smoothing scale `alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingKernel {
    alpha: f64,
}

impl SmoothingKernel {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidConfig(format!("smoothing scale must be positive and finite, got {alpha}")));
        }
        Ok(Self { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn f(&self, x: f64) -> f64 {
        logistic(self.alpha * x)
    }

    /// `d/dx F(alpha x)`, chain-rule factor `alpha` included.
    pub fn f_prime(&self, x: f64) -> f64 {
        self.alpha * logistic_prime(self.alpha * x)
    }

    /// `d^2/dx^2 F(alpha x)`.
    pub fn f_second(&self, x: f64) -> f64 {
        self.alpha * self.alpha * logistic_second(self.alpha * x)
    }

    /// Upper bound on `|f_second|` over the real line.
    pub fn f_second_bound(&self) -> f64 {
        self.alpha * self.alpha * LOGISTIC_SECOND_SUP
    }
}
