use core::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Real scalar type backing amplitudes and probabilities.
///
/// Blanket-implemented for `f32` and `f64`. Everything in the engine is
/// written against this trait; the protocol layers default to `f64`.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Tolerance for state-level invariants (normalization, hermiticity).
    fn state_tolerance() -> Self;

    /// Convert an `f64` literal. Panics only for non-representable values,
    /// which cannot happen for the finite constants used in this crate.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f64 {
    #[inline]
    fn state_tolerance() -> Self {
        1e-10
    }
}

impl Real for f32 {
    // Single precision cannot hold 1e-10; scale with machine epsilon instead.
    #[inline]
    fn state_tolerance() -> Self {
        64.0 * f32::EPSILON
    }
}
