//! Scalar abstraction shared by the numeric kernels.
//!
//! Point-process, text-likelihood, prior and metric routines are written
//! against [`Scalar`] so they run in `f32` or `f64`. The overlap statistic
//! only needs field arithmetic and ordering, so it is generic over
//! [`Field`], which also admits exact rationals.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, Num, ToPrimitive};

pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal or measurement.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable")
    }

    #[inline]
    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("usize is representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Ordered field arithmetic, enough for ratios of sums and minima.
pub trait Field: Num + Clone + PartialOrd + FromPrimitive + Debug {}

impl<T: Num + Clone + PartialOrd + FromPrimitive + Debug> Field for T {}

/// `log(Σ exp(x_i))` with max-subtraction. Empty input gives `-inf`.
pub fn log_sum_exp<T: Scalar>(xs: &[T]) -> T {
    let max = xs.iter().copied().fold(T::neg_infinity(), T::max);
    if !max.is_finite() {
        return max;
    }
    let s: T = xs.iter().map(|&x| (x - max).exp()).sum();
    max + s.ln()
}
