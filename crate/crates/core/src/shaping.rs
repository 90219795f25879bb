//! Scalar shaping functions for the force, alignment, and barrier terms.
//!
//! The controller is parametrized by a small set of *κ-like* scalar functions
//! (continuous, non-decreasing, zero exactly at zero) and one bivariate
//! positive-definite alignment potential. Rather than accepting arbitrary
//! closures, each slot accepts a coefficient set for one of the built-in
//! functional families below, which keeps configurations serializable and lets
//! every family ship an analytic derivative. A central-difference helper is
//! provided for checking derivatives numerically.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{real, signed_pow, Real};

/// Univariate shaping function family. Used for the alignment shaping
/// `kappa_a`, the orientation shaping `kappa_a_o`, and the barrier shaping
/// `kappa_b`; the validation requirements differ per role (see
/// [`Shaping::validate`]).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Kappa1<T> {
    /// `gain·s`.
    Linear { gain: T },
    /// `gain·⌊s⌉^exponent` (signed power, odd in `s`).
    SignedPower { gain: T, exponent: T },
    /// `gain·s/(√s + offset)^power` for `s ≥ 0`, extended oddly to `s < 0`.
    ///
    /// For `power = 2` this saturates at `gain`; for `power = 1` it grows like
    /// `gain·√s`. Its derivative at zero is the finite value
    /// `gain/offset^power`, so it is steep near zero without blowing up.
    Saturating { gain: T, offset: T, power: i32 },
    /// `gain_above·s` for `s ≥ 0`, `-gain_below·|s|^exponent_below` for
    /// `s < 0`. Useful as a barrier shaping whose negative branch is steeper
    /// than linear near zero: with `exponent_below < 1` the constraint forces
    /// a below-boundary state back to the boundary in finite time, while the
    /// positive branch stays linear (smooth constraint riding).
    Asymmetric {
        gain_above: T,
        gain_below: T,
        exponent_below: T,
    },
}

impl<T: Real> Kappa1<T> {
    /// Evaluates the function.
    pub fn eval(&self, s: T) -> T {
        match *self {
            Kappa1::Linear { gain } => gain * s,
            Kappa1::SignedPower { gain, exponent } => gain * signed_pow(s, exponent),
            Kappa1::Saturating {
                gain,
                offset,
                power,
            } => {
                if s == T::zero() {
                    T::zero()
                } else {
                    let a = s.abs();
                    let v = gain * a / (a.sqrt() + offset).powi(power);
                    if s > T::zero() {
                        v
                    } else {
                        -v
                    }
                }
            }
            Kappa1::Asymmetric {
                gain_above,
                gain_below,
                exponent_below,
            } => {
                if s >= T::zero() {
                    gain_above * s
                } else {
                    -gain_below * (-s).powf(exponent_below)
                }
            }
        }
    }

    /// Analytic derivative.
    ///
    /// At `s = 0` the families that are merely one-sided differentiable report
    /// the right-hand derivative. `SignedPower` with `exponent < 1` has an
    /// unbounded derivative at zero and is rejected by validation for the
    /// roles that consume derivatives.
    pub fn derivative(&self, s: T) -> T {
        match *self {
            Kappa1::Linear { gain } => gain,
            Kappa1::SignedPower { gain, exponent } => {
                if s == T::zero() {
                    if exponent > T::one() {
                        T::zero()
                    } else {
                        // exponent == 1 gives `gain`; exponent < 1 diverges
                        // and is kept out of derivative-consuming roles by
                        // validation.
                        gain * exponent * T::zero().powf(exponent - T::one())
                    }
                } else {
                    gain * exponent * s.abs().powf(exponent - T::one())
                }
            }
            Kappa1::Saturating {
                gain,
                offset,
                power,
            } => {
                let a = s.abs();
                if a == T::zero() {
                    gain / offset.powi(power)
                } else {
                    let r = a.sqrt();
                    let half = real::<T>(0.5);
                    gain * (r + offset - T::from_i32(power).unwrap() * half * r)
                        / (r + offset).powi(power + 1)
                }
            }
            Kappa1::Asymmetric {
                gain_above,
                gain_below,
                exponent_below,
            } => {
                if s >= T::zero() {
                    gain_above
                } else {
                    gain_below * exponent_below * (-s).powf(exponent_below - T::one())
                }
            }
        }
    }

    /// Inverse on `s ≥ 0` by bisection, for strictly increasing families.
    ///
    /// Returns an error when `y < 0` or when `y` exceeds the supremum of the
    /// family (e.g. the saturation level of `Saturating` with `power = 2`).
    pub fn inverse(&self, y: T) -> Result<T> {
        if y < T::zero() {
            return Err(Error::Precondition(format!(
                "kappa inverse requested for negative value {:?}",
                y.to_f64()
            )));
        }
        if y == T::zero() {
            return Ok(T::zero());
        }
        let mut hi = T::one();
        let mut doubling = 0;
        while self.eval(hi) < y {
            hi = hi + hi;
            doubling += 1;
            if doubling > 200 {
                return Err(Error::Precondition(format!(
                    "kappa inverse: {:?} exceeds the supremum of the shaping family",
                    y.to_f64()
                )));
            }
        }
        let mut lo = T::zero();
        for _ in 0..200 {
            let mid = (lo + hi) * real::<T>(0.5);
            if self.eval(mid) < y {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= real::<T>(1e-300) {
                break;
            }
        }
        Ok((lo + hi) * real::<T>(0.5))
    }

    fn validate_kappa_like(&self, name: &str, lo: T, hi: T) -> Result<()> {
        let n = 512;
        let mut prev_s = lo;
        let mut prev_v = self.eval(lo);
        if self.eval(T::zero()) != T::zero() {
            return Err(Error::InvalidShaping(format!("{name}: value at 0 is not 0")));
        }
        for i in 1..=n {
            let t = real::<T>(i as f64 / n as f64);
            let s = lo + (hi - lo) * t;
            let v = self.eval(s);
            if v < prev_v {
                return Err(Error::InvalidShaping(format!(
                    "{name}: not non-decreasing between {:?} and {:?}",
                    prev_s.to_f64(),
                    s.to_f64()
                )));
            }
            if s != T::zero() && v * s < T::zero() {
                return Err(Error::InvalidShaping(format!(
                    "{name}: sign of value opposes sign of argument at {:?}",
                    s.to_f64()
                )));
            }
            if s > T::zero() && prev_s >= T::zero() && v == prev_v {
                return Err(Error::InvalidShaping(format!(
                    "{name}: not strictly increasing on the positive axis near {:?}",
                    s.to_f64()
                )));
            }
            prev_s = s;
            prev_v = v;
        }
        Ok(())
    }

    fn has_bounded_derivative_at_zero(&self) -> bool {
        match *self {
            Kappa1::Linear { .. } | Kappa1::Saturating { .. } => true,
            Kappa1::SignedPower { exponent, .. } => exponent >= T::one(),
            Kappa1::Asymmetric { .. } => true,
        }
    }
}

/// Bivariate force shaping `kappa_f(s1, s2)`: `s1` is the measured normal
/// coordinate and `s2` the force error. For each fixed `s1` the map
/// `s2 ↦ kappa_f(s1, s2)` must be κ-like.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum KappaF<T> {
    /// `gain·s2` (independent of the distance argument).
    Linear { gain: T },
    /// `gain·⌊s2⌉^exponent`.
    SignedPower { gain: T, exponent: T },
    /// `(slope·|s1| + offset)·⌊s2⌉^exponent`: force-error response whose gain
    /// grows with the distance to the surface, so the approach speeds up far
    /// away and softens near contact.
    DistanceScaled { offset: T, slope: T, exponent: T },
}

impl<T: Real> KappaF<T> {
    /// Evaluates the shaping at distance coordinate `s1` and force error `s2`.
    pub fn eval(&self, s1: T, s2: T) -> T {
        match *self {
            KappaF::Linear { gain } => gain * s2,
            KappaF::SignedPower { gain, exponent } => gain * signed_pow(s2, exponent),
            KappaF::DistanceScaled {
                offset,
                slope,
                exponent,
            } => (slope * s1.abs() + offset) * signed_pow(s2, exponent),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            KappaF::Linear { gain } => gain > T::zero(),
            KappaF::SignedPower { gain, exponent } => gain > T::zero() && exponent > T::zero(),
            KappaF::DistanceScaled {
                offset,
                slope,
                exponent,
            } => offset > T::zero() && slope >= T::zero() && exponent > T::zero(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidShaping(
                "kappa_f coefficients must give a strictly increasing response with positive \
                 gain at every distance"
                    .into(),
            ))
        }
    }
}

/// Planar alignment potential `V(r_x, r_y)`: positive definite, zero only at
/// the origin, with a gradient that vanishes only at the origin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum AlignmentPotential<T> {
    /// `wx·r_x² + wy·r_y²`.
    Quadratic { wx: T, wy: T },
}

impl<T: Real> AlignmentPotential<T> {
    /// Evaluates the potential.
    pub fn eval(&self, rx: T, ry: T) -> T {
        match *self {
            AlignmentPotential::Quadratic { wx, wy } => wx * rx * rx + wy * ry * ry,
        }
    }

    /// Gradient `(∂V/∂r_x, ∂V/∂r_y)`.
    pub fn grad(&self, rx: T, ry: T) -> (T, T) {
        match *self {
            AlignmentPotential::Quadratic { wx, wy } => {
                let two = real::<T>(2.0);
                (two * wx * rx, two * wy * ry)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            AlignmentPotential::Quadratic { wx, wy } => {
                if wx > T::zero() && wy > T::zero() {
                    Ok(())
                } else {
                    Err(Error::InvalidShaping(
                        "alignment potential weights must be positive".into(),
                    ))
                }
            }
        }
    }
}

/// Full shaping bundle consumed by the controller, together with the two
/// boundary parameters that define the force task: the barrier floor
/// `z_d_star` (a normal coordinate strictly below the expected equilibrium
/// insertion) and the desired normal force `f_d < 0` (pushing).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Shaping<T> {
    pub kappa_f: KappaF<T>,
    pub v_a_xy: AlignmentPotential<T>,
    pub kappa_a_o: Kappa1<T>,
    pub kappa_a: Kappa1<T>,
    pub kappa_b: Kappa1<T>,
    pub z_d_star: T,
    pub f_d: T,
}

impl<T: Real> Shaping<T> {
    /// The experiment preset: the shaping coefficients used by all bundled
    /// scenarios, with the force setpoint and barrier floor supplied per
    /// scenario.
    pub fn desk_defaults(f_d: T, z_d_star: T) -> Self {
        Shaping {
            kappa_f: KappaF::DistanceScaled {
                offset: real(0.02),
                slope: real(0.12),
                exponent: real(0.5),
            },
            v_a_xy: AlignmentPotential::Quadratic {
                wx: real(6.5),
                wy: real(6.5),
            },
            kappa_a_o: Kappa1::Linear { gain: real(4.0) },
            kappa_a: Kappa1::Saturating {
                gain: real(2.08),
                offset: real(0.29),
                power: 2,
            },
            kappa_b: Kappa1::Linear { gain: real(0.3) },
            f_d,
            z_d_star,
        }
    }

    /// Checks every slot for its role:
    ///
    /// * `kappa_f`: strictly increasing in the force error, positive gain;
    /// * `v_a_xy`: positive definite;
    /// * `kappa_a_o`: strictly κ-like on the orientation range `[0, 2]`;
    /// * `kappa_a`: strictly κ-like on `s ≥ 0` with a bounded derivative at 0
    ///   (its derivative enters the barrier gradient);
    /// * `kappa_b`: κ-like on all of ℝ;
    /// * `z_d_star < 0` and `f_d < 0`.
    pub fn validate(&self) -> Result<()> {
        self.kappa_f.validate()?;
        self.v_a_xy.validate()?;
        self.kappa_a_o
            .validate_kappa_like("kappa_a_o", T::zero(), real(2.0))?;
        self.kappa_a
            .validate_kappa_like("kappa_a", T::zero(), real(16.0))?;
        if !self.kappa_a.has_bounded_derivative_at_zero() {
            return Err(Error::InvalidShaping(
                "kappa_a must have a bounded derivative at zero".into(),
            ));
        }
        if !self.kappa_a_o.has_bounded_derivative_at_zero() {
            return Err(Error::InvalidShaping(
                "kappa_a_o must have a bounded derivative at zero".into(),
            ));
        }
        self.kappa_b
            .validate_kappa_like("kappa_b", real(-4.0), real(4.0))?;
        if self.z_d_star >= T::zero() {
            return Err(Error::InvalidShaping(format!(
                "z_d_star must be negative, got {}",
                self.z_d_star.to_f64().unwrap_or(f64::NAN)
            )));
        }
        if self.f_d >= T::zero() {
            return Err(Error::InvalidShaping(format!(
                "f_d must be negative (pushing force), got {}",
                self.f_d.to_f64().unwrap_or(f64::NAN)
            )));
        }
        Ok(())
    }
}

/// Symmetric central difference `(f(s+h) - f(s-h)) / 2h`; handy for verifying
/// the analytic derivatives of shaping families (step of about `1e-7` gives
/// roughly eight significant digits in `f64`).
pub fn central_difference<T: Real>(f: impl Fn(T) -> T, s: T, h: T) -> T {
    (f(s + h) - f(s - h)) / (h + h)
}
