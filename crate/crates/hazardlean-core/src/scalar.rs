//! Scalar abstraction for all numeric routines.
//!
//! Everything in this crate computes over a [`Real`] scalar so the same code
//! runs in `f32` or `f64`. `Real` is a blanket trait: any float type with the
//! required numeric capabilities implements it automatically.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar usable throughout the crate.
///
/// The bounds cover ordinary arithmetic (`Float`, `NumAssign`), mathematical
/// constants (`FloatConst`), conversions to and from `f64` for interacting
/// with random number generation and serialization, summation, and the
/// thread-safety and formatting bounds needed by parallel drivers and error
/// messages.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Send
    + Sync
    + Debug
    + Display
    + 'static
{
    /// Converts an `f64` constant into this scalar type.
    ///
    /// Panics if the value is not representable, which cannot happen for
    /// finite constants in `f32`/`f64`.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 constant must convert")
    }

    /// Converts this scalar to `f64` (lossless for `f32`/`f64`).
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("real scalar must convert to f64")
    }
}

impl<T> Real for T where
    T: Float
        + FloatConst
        + FromPrimitive
        + ToPrimitive
        + NumAssign
        + Sum
        + Send
        + Sync
        + Debug
        + Display
        + 'static
{
}

#[cfg(test)]
mod tests {
    use super::*;

    fn half<T: Real>() -> T {
        T::of(0.5)
    }

    #[test]
    fn blanket_impl_covers_both_float_widths() {
        assert_eq!(half::<f64>(), 0.5f64);
        assert_eq!(half::<f32>(), 0.5f32);
        assert_eq!(2.25f64.to_f64_lossy(), 2.25);
    }
}
