//! Floating-point abstraction shared by the numeric modules.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar used for scores and costs: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Absolute slack under which two path costs are treated as tied.
    fn tie_tolerance() -> Self;
}

impl Scalar for f32 {
    fn tie_tolerance() -> Self {
        1e-4
    }
}

impl Scalar for f64 {
    fn tie_tolerance() -> Self {
        1e-12
    }
}

/// Converts an `f64` literal into `T`.
///
/// Every `Scalar` can represent (a rounding of) any finite `f64`, so this never fails for
/// finite input.
#[inline]
pub fn cast<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("finite f64 converts to any Scalar")
}

#[inline]
pub fn to_f64<T: Scalar>(x: T) -> f64 {
    x.to_f64().expect("Scalar converts to f64")
}
