use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar the probability and solver code is written against.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Allowed deviation of a probability vector's total mass from one.
    fn normalization_tolerance() -> Self;

    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable")
    }

    fn from_usize_lossy(v: usize) -> Self {
        Self::from_usize(v).expect("count representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }

    /// `x * log2(x / y)` with the convention `0 log(0/y) = 0`.
    fn xlog2_ratio(x: Self, y: Self) -> Self {
        if x <= Self::zero() {
            Self::zero()
        } else if y <= Self::zero() {
            Self::infinity()
        } else {
            x * (x / y).log2()
        }
    }
}

impl Real for f64 {
    fn normalization_tolerance() -> Self {
        1e-12
    }
}

impl Real for f32 {
    // 1e-12 is below f32 resolution; a few ulps of the unit mass instead.
    fn normalization_tolerance() -> Self {
        4.0 * f32::EPSILON * 16.0
    }
}
