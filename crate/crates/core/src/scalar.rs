//! Floating-point scalar abstraction shared by the numeric kernels.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar the linear algebra, network and optimizer code is generic over.
///
/// Implemented for `f32` and `f64`. Training defaults to `f64`: finite-difference
/// gradient checks need the extra precision.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Lossy conversion from `f64`, used for literals and data ingestion.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 converts to every Scalar")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn sigmoid(self) -> Self {
        // Split on sign so exp never overflows.
        if self >= Self::zero() {
            Self::one() / (Self::one() + (-self).exp())
        } else {
            let e = self.exp();
            e / (Self::one() + e)
        }
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(Scalar::sigmoid(0.0f64), 0.5);
        assert_eq!(Scalar::sigmoid(1000.0f64), 1.0);
        assert_eq!(Scalar::sigmoid(-1000.0f64), 0.0);
        assert!(!Scalar::sigmoid(-1000.0f32).is_nan());
    }
}
