//! Scalar abstraction for the numerical core.

use ndarray::NdFloat;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating point type the solver and oracle are generic over (`f32` or `f64`).
pub trait Scalar: NdFloat + FromPrimitive + ToPrimitive + Default {
    /// Converts an `f64` literal into this scalar type.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable in scalar type")
    }

    /// Converts a count into this scalar type.
    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
