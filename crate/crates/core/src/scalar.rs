//! The floating-point abstraction the numerical code is written against.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, ToPrimitive};

/// A real scalar usable by every model, solver and imputation routine.
///
/// Implemented for `f32` and `f64`. Exact/rational types are not supported
/// because the link functions and divergences need `exp` and `ln`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + LinalgScalar
    + ScalarOperand
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal. Panics only if the target type cannot
    /// represent finite `f64` literals at all, which never happens for the
    /// implemented types.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable in scalar type")
    }

    /// Default absolute gradient tolerance for the Newton solver.
    fn default_gradient_tolerance() -> Self;

    /// Default clipping distance from divergence singularities.
    fn default_clip_epsilon() -> Self;
}

impl Scalar for f64 {
    fn default_gradient_tolerance() -> Self {
        1e-8
    }

    fn default_clip_epsilon() -> Self {
        1e-8
    }
}

// 1e-8 is below single-precision resolution near 1.0, so both defaults are
// loosened for f32.
impl Scalar for f32 {
    fn default_gradient_tolerance() -> Self {
        1e-4
    }

    fn default_clip_epsilon() -> Self {
        1e-6
    }
}
