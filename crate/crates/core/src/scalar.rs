use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

/// Floating-point type the numerical core is written against.
///
/// Implemented for `f32` and `f64`. File formats and the CLI work in `f64`;
/// values cross that boundary through [`Scalar::lit`] and [`Scalar::to_f64_lossy`].
pub trait Scalar:
    'static
    + Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
{
    /// Convert an `f64` constant into this type.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant representable in scalar type")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable in scalar type")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Largest argument for which `exp(-x)` is still nonzero.
    fn exp_underflow() -> Self;
}

impl Scalar for f32 {
    fn exp_underflow() -> Self {
        104.0
    }
}

impl Scalar for f64 {
    fn exp_underflow() -> Self {
        746.0
    }
}
