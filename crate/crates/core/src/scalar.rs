//! Scalar abstraction shared by the numerical modules.
//!
//! Everything in the model, graph, discretization and filter layers is generic
//! over [`Real`]; the harness and CLI work in `f64` through the aliases
//! exported at the crate root.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating point type usable by the estimator: `f32` or `f64`.
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive + std::fmt::Display {
    /// Converts an `f64` literal into this scalar type.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable in scalar type")
    }

    /// Converts a count into this scalar type.
    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn finite(self) -> bool {
        self.as_f64().is_finite()
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Logistic function `1 / (1 + e^-z)` with the exponent argument clamped to
/// `[-500, 500]`.
#[inline]
pub(crate) fn sigmoid<S: Real>(z: S) -> S {
    let z = clamp_exp_arg(z);
    if z >= S::zero() {
        S::one() / (S::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (S::one() + e)
    }
}

#[inline]
pub(crate) fn clamp_exp_arg<S: Real>(z: S) -> S {
    let lim = S::lit(500.0);
    if z > lim {
        lim
    } else if z < -lim {
        -lim
    } else {
        z
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_limits_do_not_overflow() {
        assert_eq!(sigmoid(1.0e6_f64), 1.0);
        assert!(sigmoid(-1.0e6_f64) < 1e-200);
        assert!((sigmoid(0.0_f64) - 0.5).abs() < 1e-15);
        assert!((sigmoid(0.0_f32) - 0.5).abs() < 1e-7);
    }
}
