use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating-point element type accepted by every numerical routine.
///
/// Implemented for `f32` and `f64`. Constants are written as `f64`
/// literals and converted with [`Scalar::lit`].
pub trait Scalar:
    Float
    + FloatConst
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
    /// Converts an `f64` constant into this scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    /// Lossy conversion to `f64`, used for reductions and output.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Error function.
    fn erf(self) -> Self;

    /// Largest magnitude still considered a live kernel value.
    fn guard_upper() -> Self;

    /// Smallest magnitude still considered a live kernel value.
    fn guard_lower() -> Self;
}

impl Scalar for f64 {
    #[inline]
    fn erf(self) -> Self {
        libm::erf(self)
    }

    fn guard_upper() -> Self {
        1e300
    }

    fn guard_lower() -> Self {
        1e-300
    }
}

impl Scalar for f32 {
    #[inline]
    fn erf(self) -> Self {
        libm::erff(self)
    }

    fn guard_upper() -> Self {
        1e37
    }

    fn guard_lower() -> Self {
        1e-37
    }
}
