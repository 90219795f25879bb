//! Scalar abstraction used throughout the crate.
//!
//! All numerical code is generic over [`Real`], so the whole pipeline
//! (kinematics, shaping functions, QP controller, simulator) can run in `f32`
//! or `f64`. The crate root exports `f64` aliases for the common case.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating-point scalar usable by every module in this crate.
///
/// The bound deliberately sticks to `nalgebra::RealField` for transcendental
/// functions (instead of also pulling in `num_traits::Float`, whose methods
/// collide with `RealField`'s) and adds the primitive conversions needed to
/// inject literal constants and to serialize results.
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive {}

impl Real for f32 {}
impl Real for f64 {}

/// Converts an `f64` literal into the working scalar type.
///
/// Panics only if the target type cannot represent ordinary finite `f64`
/// values, which cannot happen for the provided `f32`/`f64` implementations.
#[inline]
pub fn real<T: Real>(value: f64) -> T {
    T::from_f64(value).expect("finite f64 constant must convert to the working scalar")
}

/// Signed power `⌊s⌉^h = sign(s)·|s|^h`, the odd extension of `s^h` to
/// negative arguments. Continuous and strictly increasing in `s` for `h > 0`,
/// with `⌊0⌉^h = 0`.
#[inline]
pub fn signed_pow<T: Real>(s: T, h: T) -> T {
    if s == T::zero() {
        T::zero()
    } else if s > T::zero() {
        s.powf(h)
    } else {
        -((-s).powf(h))
    }
}
