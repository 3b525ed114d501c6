//! Scalar abstraction for the numeric kernels.
//!
//! All geometry, labeling, and metric math is generic over [`Real`] so the
//! same code paths serve `f32` and `f64`. Concrete aliases live at the crate
//! root.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar usable throughout the numeric kernels.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Send + Sync + 'static
{
    /// Lossless-enough conversion from `f64` for constants and config values.
    fn from_f64_c(v: f64) -> Self {
        Self::from_f64(v).expect("f64 constant representable in scalar type")
    }

    fn to_f64_c(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Euclidean norm of the componentwise difference of two equal-length vectors.
pub fn distance<S: Real>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<S>()
        .sqrt()
}
