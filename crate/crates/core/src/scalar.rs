//! Scalar abstraction shared by every numeric routine in the crate.
//!
//! All tables, distributions and losses are generic over [`Real`], which is
//! implemented for `f32` and `f64`. Tolerances that depend on machine
//! precision are exposed here so callers never hard-code an `f64` epsilon
//! into `f32` code.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating-point scalar usable by the crate.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal into `Self`.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal fits the scalar type")
    }

    /// Lossy conversion to `f64` for reporting and sampling.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }

    /// Largest deviation of a probability vector's sum from 1 that is
    /// silently renormalized on construction.
    #[inline]
    fn normalization_tolerance() -> Self {
        Self::lit(1e-9).max(Self::epsilon() * Self::lit(1e3))
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Logistic function, evaluated without overflow for large `|x|`.
#[inline]
pub fn sigmoid<S: Real>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

/// `log(sigmoid(x))`.
#[inline]
pub fn log_sigmoid<S: Real>(x: S) -> S {
    if x >= S::zero() {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// `x * ln(y)` with the convention `0 * ln(anything) = 0`.
#[inline]
pub fn xlogy<S: Real>(x: S, y: S) -> S {
    if x == S::zero() {
        S::zero()
    } else {
        x * y.ln()
    }
}

/// `ln(sum(exp(v)))` with max subtraction. Returns `-inf` for an empty slice.
pub fn log_sum_exp<S: Real>(values: &[S]) -> S {
    let max = values.iter().copied().fold(S::neg_infinity(), S::max);
    if max == S::neg_infinity() {
        return max;
    }
    let sum: S = values.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Softmax of `logits` written into `out`.
pub fn softmax_into<S: Real>(logits: &[S], out: &mut [S]) {
    debug_assert_eq!(logits.len(), out.len());
    let max = logits.iter().copied().fold(S::neg_infinity(), S::max);
    let mut total = S::zero();
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = (l - max).exp();
        total = total + *o;
    }
    for o in out.iter_mut() {
        *o = *o / total;
    }
}

/// Log-softmax of `logits` written into `out`.
pub fn log_softmax_into<S: Real>(logits: &[S], out: &mut [S]) {
    let lse = log_sum_exp(logits);
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = l - lse;
    }
}
