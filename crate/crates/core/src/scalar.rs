//! Scalar abstraction used by every numeric routine in the crate.
//!
//! All statistics are generic over the floating-point type so the same
//! code runs in `f32` and `f64`. The crate root exposes `f64` aliases for
//! the common case.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar; implemented by `f32` and `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum<Self>
    + for<'a> Sum<&'a Self>
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Converts from `f64`, saturating precision as needed.
    fn of_f64(v: f64) -> Self {
        Self::from_f64(v).expect("conversion from f64")
    }

    /// Widens to `f64`.
    fn as_f64(self) -> f64 {
        self.to_f64().expect("conversion to f64")
    }

    /// Converts a count to the scalar type.
    fn of_usize(v: usize) -> Self {
        Self::from_usize(v).expect("conversion from usize")
    }
}

impl<T> Scalar for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + AddAssign
        + SubAssign
        + MulAssign
        + DivAssign
        + Sum<Self>
        + for<'a> Sum<&'a Self>
        + Debug
        + Display
        + Send
        + Sync
        + 'static
{
}

/// Scalar that additionally supports dense linear algebra through nalgebra.
///
/// Needed by the model-fitting and eigendecomposition paths; the weights
/// and autocorrelation statistics only require [`Scalar`].
pub trait LinalgScalar: Scalar + nalgebra::RealField {}

impl<T> LinalgScalar for T where T: Scalar + nalgebra::RealField {}
