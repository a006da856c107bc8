//! Floating-point scalar abstraction shared by scores and metrics.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real scalar used for probabilities, similarities and metric values.
///
/// Implemented for `f32` and `f64`. Everything that produces or consumes a
/// score is generic over this trait; the crate root exposes `f64` aliases.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Exact conversion of a count. Counts beyond the mantissa lose precision
    /// the same way `as` casts do.
    fn from_count(n: u64) -> Self {
        Self::from_u64(n).expect("count representable as float")
    }

    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 representable")
    }

    fn half() -> Self {
        Self::from_f64_lossy(0.5)
    }

    /// True when the value lies in the closed unit interval.
    fn in_unit_interval(self) -> bool {
        self >= Self::zero() && self <= Self::one()
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Ratio of two counts, `0` when the denominator is zero.
pub(crate) fn ratio<F: Scalar>(num: u64, den: u64) -> F {
    if den == 0 {
        F::zero()
    } else {
        F::from_count(num) / F::from_count(den)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_interval_bounds() {
        assert!(0.0f64.in_unit_interval());
        assert!(1.0f32.in_unit_interval());
        assert!(!1.0001f64.in_unit_interval());
        assert!(!f64::NAN.in_unit_interval());
    }

    #[test]
    fn zero_denominator_ratio() {
        assert_eq!(ratio::<f64>(3, 0), 0.0);
        assert_eq!(ratio::<f32>(1, 4), 0.25);
    }
}
