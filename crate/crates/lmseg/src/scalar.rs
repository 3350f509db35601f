use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive};

/// Floating-point scalar the tagger math is generic over.
///
/// `f32` and `f64` both satisfy this; the model file format always stores
/// parameters as `f32` (see `tagger::io`).
pub trait Scalar:
    Float
    + FromPrimitive
    + ScalarOperand
    + LinalgScalar
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + Debug
    + Display
    + 'static
{
    /// Lossy conversion from an `f64` constant.
    fn c(v: f64) -> Self {
        Self::from_f64(v).expect("scalar constant")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
