//! Floating-point element abstraction.
//!
//! Everything numeric in this crate is generic over [`Scalar`] so the same
//! code paths run in `f32` for training and in `f64` for gradient checking.
//! Keeping one implementation for both precisions is what makes the finite
//! difference checks meaningful: they exercise the exact code that trains.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

/// Element type for tensors: `f32` or `f64`.
pub trait Scalar:
    Copy
    + PartialOrd
    + Debug
    + Display
    + Send
    + Sync
    + Default
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + Sum
    + 'static
{
    const ZERO: Self;
    const ONE: Self;

    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;

    fn abs(self) -> Self;
    fn sqrt(self) -> Self;
    fn exp(self) -> Self;
    fn tanh(self) -> Self;
    fn max(self, other: Self) -> Self;
    fn min(self, other: Self) -> Self;
    fn is_finite(self) -> bool;

    /// Machine epsilon of the type.
    fn epsilon() -> Self;
    /// Smallest positive normal value of the type.
    fn min_positive() -> Self;
}

macro_rules! impl_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            const ZERO: Self = 0.0;
            const ONE: Self = 1.0;

            #[inline]
            fn from_f64(v: f64) -> Self {
                v as $t
            }
            #[inline]
            fn to_f64(self) -> f64 {
                self as f64
            }
            #[inline]
            fn abs(self) -> Self {
                <$t>::abs(self)
            }
            #[inline]
            fn sqrt(self) -> Self {
                <$t>::sqrt(self)
            }
            #[inline]
            fn exp(self) -> Self {
                <$t>::exp(self)
            }
            #[inline]
            fn tanh(self) -> Self {
                <$t>::tanh(self)
            }
            #[inline]
            fn max(self, other: Self) -> Self {
                <$t>::max(self, other)
            }
            #[inline]
            fn min(self, other: Self) -> Self {
                <$t>::min(self, other)
            }
            #[inline]
            fn is_finite(self) -> bool {
                <$t>::is_finite(self)
            }
            #[inline]
            fn epsilon() -> Self {
                <$t>::EPSILON
            }
            #[inline]
            fn min_positive() -> Self {
                <$t>::MIN_POSITIVE
            }
        }
    };
}

impl_scalar!(f32);
impl_scalar!(f64);

/// Logistic sigmoid with output clamped to the open interval (0, 1).
///
/// The mathematical sigmoid never reaches 0 or 1, but in finite precision
/// `1 / (1 + exp(-x))` rounds to exactly 1.0 for moderately large `x`
/// (around 17 in f32). Gate values of exactly 0 or 1 would freeze the
/// recurrent state update, so the result is nudged back into the open
/// interval. The clamp is inactive for all non-saturated inputs.
#[inline]
pub fn sigmoid<S: Scalar>(x: S) -> S {
    let y = S::ONE / (S::ONE + (-x).exp());
    y.max(S::min_positive()).min(S::ONE - S::epsilon())
}
