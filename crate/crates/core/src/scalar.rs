use std::fmt::Debug;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive};

/// Floating-point scalar usable by the capacity and power kernels: f32 or f64.
pub trait Scalar: Float + FromPrimitive + Sum + Debug + Send + Sync + 'static {
    /// Converts an f64 constant (tolerances, config values) into `Self`.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
