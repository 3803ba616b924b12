//! Scalar abstraction shared by the mapping, circuit and solver stages.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point type the circuit math runs in (`f32` or `f64`).
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Send + Sync + 'static
{
    /// Relative residual bound `‖Gx − b‖ / ‖b‖` accepted from the linear solvers.
    const RESIDUAL_TOL: f64;

    /// Converts an `f64` literal or config value into this type.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable in every Scalar")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }
}

impl Scalar for f64 {
    const RESIDUAL_TOL: f64 = 1e-10;
}

impl Scalar for f32 {
    // single precision cannot reach 1e-10; ~100 ulps of headroom
    const RESIDUAL_TOL: f64 = 1e-4;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lit_round_trips() {
        assert_eq!(f64::lit(0.8), 0.8);
        assert_eq!(f32::lit(0.5).as_f64(), 0.5);
    }
}
