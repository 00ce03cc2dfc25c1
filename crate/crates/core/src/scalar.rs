use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, NumCast};

/// Floating point scalar the interval maps are evaluated in: `f32` or `f64`.
pub trait Real:
    Float + FloatConst + FromPrimitive + NumCast + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as NumCast>::from(x).expect("f64 literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        <f64 as NumCast>::from(self).unwrap_or(f64::NAN)
    }

    /// Tolerance used by bisection solves in this precision.
    fn solve_tol() -> Self;
}

impl Real for f32 {
    fn solve_tol() -> Self {
        1e-6
    }
}

impl Real for f64 {
    fn solve_tol() -> Self {
        1e-13
    }
}
