use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive};

/// Real-valued millisecond quantity used by the metrics code.
pub trait Scalar: Float + FromPrimitive + Display + Debug + Send + Sync + 'static {
    fn from_f64_lossy(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).unwrap_or_else(Self::nan)
    }

    fn from_count(n: usize) -> Self {
        <Self as FromPrimitive>::from_usize(n).unwrap_or_else(Self::nan)
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Scalar for T where T: Float + FromPrimitive + Display + Debug + Send + Sync + 'static {}
