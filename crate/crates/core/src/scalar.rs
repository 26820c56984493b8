//! Scalar abstraction shared by every geometric and statistical routine.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point type the engine can run on: `f32` or `f64`.
pub trait Scalar:
    Float
    + FloatConst
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
    /// Distance below which a point is considered on a clipping edge.
    fn clip_eps() -> Self;

    /// Absolute slack applied to box-membership tests, in meters.
    fn membership_eps() -> Self;

    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {
    fn clip_eps() -> Self {
        1e-6
    }

    fn membership_eps() -> Self {
        1e-4
    }
}

impl Scalar for f64 {
    fn clip_eps() -> Self {
        1e-12
    }

    fn membership_eps() -> Self {
        1e-9
    }
}

/// Wraps an angle into `(-pi, pi]`. Angles already in range are returned
/// untouched so that stored values survive bit-exact.
pub fn normalize_angle<T: Scalar>(theta: T) -> T {
    let pi = T::PI();
    if theta > -pi && theta <= pi {
        return theta;
    }
    let two_pi = pi + pi;
    let mut r = theta - two_pi * ((theta + pi) / two_pi).floor();
    if r <= -pi {
        r = r + two_pi;
    }
    if r > pi {
        r = r - two_pi;
    }
    r
}
