//! Scalar abstraction shared by every numeric routine in the crate.
//!
//! All estimators are written against [`Real`], which is implemented for
//! `f32` and `f64`. Tolerances that only make sense in double precision are
//! expressed through [`Real::tol`], which floors a requested tolerance at a
//! small multiple of the type's machine epsilon.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + LinalgScalar
    + ScalarOperand
    + Sum
    + Default
    + Debug
    + Display
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal; never fails for the supported types.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(v: usize) -> Self {
        Self::from_usize(v).expect("usize representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("finite conversion")
    }

    /// `requested`, unless that is below what the type can resolve.
    #[inline]
    fn tol(requested: f64) -> Self {
        let floor = Self::epsilon() * Self::lit(64.0);
        Self::lit(requested).max(floor)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Numerically stable logistic function.
#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[inline]
pub fn logit<T: Real>(p: T) -> T {
    (p / (T::one() - p)).ln()
}

/// `log(sum(exp(xs)))`, returning `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp<T: Real>(xs: &[T]) -> T {
    let max = xs.iter().copied().fold(T::neg_infinity(), T::max);
    if max == T::neg_infinity() {
        return max;
    }
    let sum: T = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Softmax via max-shifted exponentials. Returns `None` if every entry is
/// `-inf` (no finite mass).
pub fn softmax<T: Real>(logits: &[T]) -> Option<Vec<T>> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    if max == T::neg_infinity() || max.is_nan() {
        return None;
    }
    let exps: Vec<T> = logits.iter().map(|&x| (x - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    Some(exps.into_iter().map(|e| e / total).collect())
}
