use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point type the numerical routines are generic over.
///
/// Implemented for `f32` and `f64`. Costs are logarithmic, so exact
/// rational scalars are not supported.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` constant. Panics only if the value is not representable,
    /// which cannot happen for the finite constants used in this crate.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite constant representable in scalar type")
    }

    #[inline]
    fn of_usize(x: usize) -> Self {
        Self::from_usize(x).expect("count representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// `x * log2(x)` with the `0 * log 0 = 0` convention.
    #[inline]
    fn xlog2x(self) -> Self {
        if self > Self::zero() {
            self * self.log2()
        } else {
            Self::zero()
        }
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
