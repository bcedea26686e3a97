use num_traits::{Float as NumFloat, FloatConst, FromPrimitive, NumAssignOps};
use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

/// Scalar type for all mesh geometry, assembly and linear algebra.
///
/// The solver is generic over the floating point type; `f64` is the type
/// used by the command line front end and the test suites, `f32` compiles
/// but is too coarse for the pinned tolerances.
pub trait Real:
    NumFloat + FloatConst + FromPrimitive + NumAssignOps + Sum + Debug + Display + LowerExp + Send + Sync + 'static
{
    #[inline]
    fn two() -> Self {
        Self::from_f64(2.0).unwrap()
    }
    #[inline]
    fn half() -> Self {
        Self::from_f64(0.5).unwrap()
    }
    /// Shorthand for literals: `T::c(20.0)`.
    #[inline]
    fn c(v: f64) -> Self {
        Self::from_f64(v).unwrap()
    }
    #[inline]
    fn pow2(self) -> Self {
        self * self
    }
}

impl<T> Real for T where
    T: NumFloat
        + FloatConst
        + FromPrimitive
        + NumAssignOps
        + Sum
        + Debug
        + Display
        + LowerExp
        + Send
        + Sync
        + 'static
{
}
