//! Floating-point abstraction shared by every numeric kernel.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Real scalar the kernels are generic over (`f32` or `f64`).
///
/// The equivalence tolerances quoted throughout the crate assume `f64`;
/// `f32` instantiations work but only hold to single-precision accuracy.
pub trait Scalar:
    Float
    + FloatConst
    + NumAssign
    + FromPrimitive
    + ToPrimitive
    + LinalgScalar
    + ScalarOperand
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`.
    #[inline]
    fn of(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("f64 is representable in every Scalar")
    }

    /// Conversion from a count or index.
    #[inline]
    fn of_usize(v: usize) -> Self {
        <Self as FromPrimitive>::from_usize(v).expect("usize is representable in every Scalar")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    /// Gauss error function, at the precision of the type.
    fn erf(self) -> Self;
}

impl Scalar for f32 {
    #[inline]
    fn erf(self) -> Self {
        libm::erff(self)
    }
}

impl Scalar for f64 {
    #[inline]
    fn erf(self) -> Self {
        libm::erf(self)
    }
}
