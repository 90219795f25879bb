//! Velocity bounds, joint-limit blending, and the feasibility margin.
//!
//! Commanded velocities are restricted to a configuration-dependent box: the
//! vehicle entries carry fixed symmetric-ish rate limits (any entry may be
//! unbounded, represented explicitly — never as a large sentinel), and each
//! manipulator entry blends its rate limit with a position-limit braking law:
//!
//! ```text
//! lower_j(q) = max( u̲_m_j , K_L·(q̲_m_j - q_m_j) )
//! upper_j(q) = min( ū_m_j , K_L·(q̄_m_j - q_m_j) )
//! ```
//!
//! so the admissible speed towards a joint stop shrinks linearly to zero at
//! the stop. The feasibility of the barrier constraint `∇Bᵀu ≥ -kappa_b(B)`
//! over this box is decided by the componentwise box-LP maximizer `b*`
//! ([`b_star`]): the constraint admits a solution iff
//! `∇Bᵀb* + kappa_b(B) ≥ 0`, and that quantity is the margin returned by
//! [`feasibility_margin`].

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::kinematics::{Configuration, RobotModel, BASE_DOF};
use crate::scalar::Real;
use crate::shaping::Shaping;
use crate::task::{barrier_state, PlanarTarget};

/// A single bound value: finite, or explicitly unbounded.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Bound<T> {
    Finite(T),
    Unbounded,
}

impl<T: Real> Bound<T> {
    /// The finite value, if any.
    pub fn finite(self) -> Option<T> {
        match self {
            Bound::Finite(v) => Some(v),
            Bound::Unbounded => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Bound::Finite(_))
    }
}

/// Box `lower ≤ u ≤ upper` with per-entry optionally-unbounded sides.
#[derive(Clone, Debug, PartialEq)]
pub struct Bounds<T> {
    pub lower: Vec<Bound<T>>,
    pub upper: Vec<Bound<T>>,
}

impl<T: Real> Bounds<T> {
    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Componentwise clamp of a vector into the box.
    pub fn clamp(&self, u: &DVector<T>) -> DVector<T> {
        let mut out = u.clone();
        for i in 0..self.dim() {
            if let Bound::Finite(lo) = self.lower[i] {
                if out[i] < lo {
                    out[i] = lo;
                }
            }
            if let Bound::Finite(hi) = self.upper[i] {
                if out[i] > hi {
                    out[i] = hi;
                }
            }
        }
        out
    }

    /// Largest violation of the box by `u` (zero if inside).
    pub fn violation(&self, u: &DVector<T>) -> T {
        let mut v = T::zero();
        for i in 0..self.dim() {
            if let Bound::Finite(lo) = self.lower[i] {
                v = v.max(lo - u[i]);
            }
            if let Bound::Finite(hi) = self.upper[i] {
                v = v.max(u[i] - hi);
            }
        }
        v
    }
}

/// Rate and position limits for a model with `k` manipulator joints.
#[derive(Clone, Debug)]
pub struct LimitConfig<T> {
    /// Vehicle rate bounds `[x, y, z, psi]`, lower side (negative or
    /// unbounded).
    pub base_lower: [Bound<T>; BASE_DOF],
    /// Vehicle rate bounds, upper side (positive or unbounded).
    pub base_upper: [Bound<T>; BASE_DOF],
    /// Manipulator rate bounds, lower side (finite, negative).
    pub arm_rate_lower: Vec<T>,
    /// Manipulator rate bounds, upper side (finite, positive).
    pub arm_rate_upper: Vec<T>,
    /// Manipulator position limits, lower side (finite).
    pub arm_pos_lower: Vec<T>,
    /// Manipulator position limits, upper side (finite).
    pub arm_pos_upper: Vec<T>,
    /// Position-limit braking gain (1/s).
    pub k_l: T,
}

impl<T: Real> LimitConfig<T> {
    /// Number of manipulator joints covered.
    pub fn arm_dof(&self) -> usize {
        self.arm_rate_lower.len()
    }

    /// The experiment preset: vehicle rates ±(0.10, 0.15, ∞, 5.7°/s), arm
    /// rates ±20°/s, arm positions ±(70°, 105°, 105°, ...), braking gain 0.5.
    pub fn desk_defaults(arm_dof: usize) -> Self {
        let d = |deg: f64| -> T { crate::scalar::real(deg.to_radians()) };
        let rate = d(20.0);
        let mut pos_upper = Vec::with_capacity(arm_dof);
        for j in 0..arm_dof {
            pos_upper.push(if j == 0 { d(70.0) } else { d(105.0) });
        }
        let pos_lower: Vec<T> = pos_upper.iter().map(|&v| -v).collect();
        LimitConfig {
            base_lower: [
                Bound::Finite(crate::scalar::real(-0.10)),
                Bound::Finite(crate::scalar::real(-0.15)),
                Bound::Unbounded,
                Bound::Finite(-d(5.7)),
            ],
            base_upper: [
                Bound::Finite(crate::scalar::real(0.10)),
                Bound::Finite(crate::scalar::real(0.15)),
                Bound::Unbounded,
                Bound::Finite(d(5.7)),
            ],
            arm_rate_lower: vec![-rate; arm_dof],
            arm_rate_upper: vec![rate; arm_dof],
            arm_pos_lower: pos_lower,
            arm_pos_upper: pos_upper,
            k_l: crate::scalar::real(0.5),
        }
    }

    /// Checks signs, finiteness requirements, and consistent dimensions.
    pub fn validate(&self) -> Result<()> {
        let k = self.arm_dof();
        if self.arm_rate_upper.len() != k
            || self.arm_pos_lower.len() != k
            || self.arm_pos_upper.len() != k
        {
            return Err(Error::InvalidLimits(
                "arm limit vectors must share one length".into(),
            ));
        }
        if k == 0 {
            return Err(Error::InvalidLimits("at least one arm joint".into()));
        }
        if !(self.k_l > T::zero()) {
            return Err(Error::InvalidLimits("braking gain k_l must be positive".into()));
        }
        for i in 0..BASE_DOF {
            if let Bound::Finite(lo) = self.base_lower[i] {
                if !(lo < T::zero()) {
                    return Err(Error::InvalidLimits(format!(
                        "vehicle lower rate bound {i} must be negative"
                    )));
                }
            }
            if let Bound::Finite(hi) = self.base_upper[i] {
                if !(hi > T::zero()) {
                    return Err(Error::InvalidLimits(format!(
                        "vehicle upper rate bound {i} must be positive"
                    )));
                }
            }
        }
        for j in 0..k {
            if !(self.arm_rate_lower[j] < T::zero() && self.arm_rate_upper[j] > T::zero()) {
                return Err(Error::InvalidLimits(format!(
                    "arm rate bounds for joint {j} must straddle zero"
                )));
            }
            if !(self.arm_pos_lower[j] < self.arm_pos_upper[j]) {
                return Err(Error::InvalidLimits(format!(
                    "arm position limits for joint {j} must satisfy lower < upper"
                )));
            }
        }
        Ok(())
    }

    /// The state-dependent velocity box at configuration `q`.
    pub fn velocity_bounds(&self, q: &Configuration<T>) -> Result<Bounds<T>> {
        if q.arm_dof() != self.arm_dof() {
            return Err(Error::DimensionMismatch {
                expected: BASE_DOF + self.arm_dof(),
                got: q.dim(),
                context: "configuration vs. limit config",
            });
        }
        let n = q.dim();
        let mut lower = Vec::with_capacity(n);
        let mut upper = Vec::with_capacity(n);
        lower.extend_from_slice(&self.base_lower);
        upper.extend_from_slice(&self.base_upper);
        for (j, &qj) in q.arm().iter().enumerate() {
            let brake_lo = self.k_l * (self.arm_pos_lower[j] - qj);
            let brake_hi = self.k_l * (self.arm_pos_upper[j] - qj);
            lower.push(Bound::Finite(self.arm_rate_lower[j].max(brake_lo)));
            upper.push(Bound::Finite(self.arm_rate_upper[j].min(brake_hi)));
        }
        Ok(Bounds { lower, upper })
    }

    /// Smallest distance of the arm joints to their position limits
    /// (negative = violated).
    pub fn joint_margin(&self, q: &Configuration<T>) -> T {
        let mut m = T::max_value().unwrap();
        for (j, &qj) in q.arm().iter().enumerate() {
            m = m.min(qj - self.arm_pos_lower[j]);
            m = m.min(self.arm_pos_upper[j] - qj);
        }
        m
    }
}

/// Componentwise maximizer of `gᵀu` over the box: picks the lower bound where
/// the gradient entry is negative and the upper bound otherwise (ties at zero
/// resolve to the upper bound; the objective is indifferent there).
pub fn b_star<T: Real>(grad_b: &DVector<T>, bounds: &Bounds<T>) -> Vec<Bound<T>> {
    assert_eq!(grad_b.len(), bounds.dim(), "gradient vs. bounds dimension");
    (0..bounds.dim())
        .map(|i| {
            if grad_b[i] < T::zero() {
                bounds.lower[i]
            } else {
                bounds.upper[i]
            }
        })
        .collect()
}

/// Feasibility margin of the barrier constraint over a bound box; `Unbounded`
/// means some unbounded entry with nonzero gradient makes the constraint
/// satisfiable by an arbitrarily large rate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Margin<T> {
    Finite(T),
    Unbounded,
}

impl<T: Real> Margin<T> {
    /// Whether the constraint is satisfiable (margin ≥ 0).
    pub fn is_nonnegative(&self) -> bool {
        match *self {
            Margin::Finite(v) => v >= T::zero(),
            Margin::Unbounded => true,
        }
    }

    /// Finite value, if any.
    pub fn finite(&self) -> Option<T> {
        match *self {
            Margin::Finite(v) => Some(v),
            Margin::Unbounded => None,
        }
    }
}

/// `∇Bᵀb* + kappa_b(B)` given the parts; entries whose selected bound is
/// unbounded contribute `+∞` when their gradient entry is nonzero and `0`
/// otherwise.
pub fn margin_from_parts<T: Real>(
    grad_b: &DVector<T>,
    bounds: &Bounds<T>,
    kappa_b_of_b: T,
) -> Margin<T> {
    let choice = b_star(grad_b, bounds);
    let mut acc = kappa_b_of_b;
    for i in 0..bounds.dim() {
        match choice[i] {
            Bound::Finite(v) => acc += grad_b[i] * v,
            Bound::Unbounded => {
                if grad_b[i] != T::zero() {
                    return Margin::Unbounded;
                }
            }
        }
    }
    Margin::Finite(acc)
}

/// Full-state feasibility margin: evaluates the barrier at `q` and the bound
/// box at `q`, then applies [`margin_from_parts`].
pub fn feasibility_margin<T: Real>(
    model: &RobotModel<T>,
    q: &Configuration<T>,
    shaping: &Shaping<T>,
    limits: &LimitConfig<T>,
    target: &PlanarTarget<T>,
) -> Result<Margin<T>> {
    let st = barrier_state(model, q, shaping, target)?;
    let bounds = limits.velocity_bounds(q)?;
    Ok(margin_from_parts(
        &st.grad_barrier,
        &bounds,
        shaping.kappa_b.eval(st.barrier),
    ))
}
