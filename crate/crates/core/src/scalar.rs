//! Scalar abstraction. All engine math is generic over [`Real`], implemented
//! for `f32` and `f64`. Concrete `f64` aliases live at the crate root.

use std::fmt;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};

/// Floating-point scalar used throughout the engine.
pub trait Real:
    Float + FloatConst + NumAssign + FromPrimitive + Default + fmt::Debug + fmt::Display + Send + Sync + 'static
{
    /// Lift an `f64` literal into the scalar type.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in Real type")
    }

    /// Lift a count into the scalar type.
    #[inline]
    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable in Real type")
    }

    /// Lossy view as `f64`, for diagnostics and error messages.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Degrees to radians.
#[inline]
pub fn deg_to_rad<T: Real>(deg: T) -> T {
    deg * T::PI() / T::of(180.0)
}

/// Radians to degrees.
#[inline]
pub fn rad_to_deg<T: Real>(rad: T) -> T {
    rad * T::of(180.0) / T::PI()
}

/// Logistic sigmoid `1/(1+exp(-x))`, evaluated branch-stably so that large
/// arguments of either sign cannot overflow.
#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Softplus `ln(1+exp(x))` in the overflow-safe form `max(x,0) + ln1p(exp(-|x|))`.
#[inline]
pub fn softplus<T: Real>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_matches_naive_form_in_safe_range() {
        for i in -60..=60 {
            let x = f64::from(i) * 0.5;
            let naive = 1.0 / (1.0 + (-x).exp());
            assert!((sigmoid(x) - naive).abs() < 1e-15, "x={x}");
        }
    }

    #[test]
    fn sigmoid_saturates_without_overflow() {
        assert_eq!(sigmoid(1.0e6_f64), 1.0);
        assert_eq!(sigmoid(-1.0e6_f64), 0.0);
        assert!(sigmoid(-745.0_f64) >= 0.0);
    }

    #[test]
    fn softplus_is_finite_at_extremes() {
        assert!(softplus(1.0e6_f64).is_finite());
        assert!(softplus(-1.0e6_f64).is_finite());
        assert!((softplus(0.0_f64) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((softplus(15.0_f64) - 15.000000305902274).abs() < 1e-12);
    }

    #[test]
    fn degree_radian_conversions() {
        assert!((deg_to_rad(180.0_f64) - std::f64::consts::PI).abs() < 1e-15);
        assert!((rad_to_deg(std::f64::consts::FRAC_PI_2) - 90.0_f64).abs() < 1e-12);
        let x = 12.34_f32;
        assert!((rad_to_deg(deg_to_rad(x)) - x).abs() < 1e-4);
    }
}
