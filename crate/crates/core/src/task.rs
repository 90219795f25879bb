//! Task coordinates, alignment error, and the safety barrier.
//!
//! The pressing task is encoded in four scalar coordinates of the end-effector
//! pose in the plane frame:
//!
//! * `r_X = X - X_ref`, `r_Y = Y - Y_ref`: tangential offsets from the target
//!   point (the reference defaults to the plane origin and may be modulated
//!   over time to slide the contact point);
//! * `r_O = 1 + ě_zᵀž ∈ [0, 2]`: orientation error, zero exactly when the
//!   tool points into the surface (`ž = -ě_z`);
//! * `r_Z = Z - Z_d`: normal coordinate relative to the (environment-defined)
//!   insertion `Z_d` at which the desired force is generated.
//!
//! The controller itself never needs `Z_d` or the force model: the derivative
//! of the force potential along `r_Z` equals `kappa_f(Z, F - F_d)` evaluated
//! at the *measured* force, which is the only quantity the control law uses
//! ([`dvf_drz`]). The combined alignment error is
//! `A = V(r_X, r_Y) + kappa_a_o(r_O)` and the barrier is
//! `B = Z - Z_d_star - kappa_a(A)`: keeping `B ≥ 0` ensures the tool may only
//! approach the surface as well-aligned as the shaping demands.

use nalgebra::DVector;

use crate::error::Result;
use crate::kinematics::{Configuration, EndEffectorState, KinematicFrames, RobotModel, TaskGradients};
use crate::scalar::Real;
use crate::shaping::Shaping;

/// Tangential reference point on the surface (plane-frame meters).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlanarTarget<T> {
    pub x_ref: T,
    pub y_ref: T,
}

impl<T: Real> Default for PlanarTarget<T> {
    fn default() -> Self {
        PlanarTarget {
            x_ref: T::zero(),
            y_ref: T::zero(),
        }
    }
}

/// The four task coordinates. Only diagnostics and audits construct the full
/// set; the control path never sees `r_z`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TaskCoordinates<T> {
    pub r_x: T,
    pub r_y: T,
    pub r_o: T,
    pub r_z: T,
}

/// Extracts the task coordinates from an end-effector state, given the
/// environment-side insertion depth `z_d`.
pub fn task_coordinates<T: Real>(
    ee: &EndEffectorState<T>,
    target: &PlanarTarget<T>,
    z_d: T,
) -> TaskCoordinates<T> {
    TaskCoordinates {
        r_x: ee.x() - target.x_ref,
        r_y: ee.y() - target.y_ref,
        r_o: T::one() + ee.z_axis()[2],
        r_z: ee.z() - z_d,
    }
}

/// Derivative of the force potential along the normal coordinate, evaluated
/// without any force-model knowledge: `kappa_f(Z, F_measured - F_d)`.
///
/// This identity is what makes the force loop model-free: the potential is
/// defined through the (unknown) force characteristic, but its slope at the
/// current state only involves the measured force.
pub fn dvf_drz<T: Real>(shaping: &Shaping<T>, z: T, f_measured: T) -> T {
    shaping.kappa_f.eval(z, f_measured - shaping.f_d)
}

/// Combined alignment error `A = V(r_X, r_Y) + kappa_a_o(r_O)`.
pub fn alignment_value<T: Real>(shaping: &Shaping<T>, r_x: T, r_y: T, r_o: T) -> T {
    shaping.v_a_xy.eval(r_x, r_y) + shaping.kappa_a_o.eval(r_o)
}

/// Barrier value `B = Z - Z_d_star - kappa_a(A)` from already-computed
/// scalars; used both by the controller pipeline and by audit recomputation.
pub fn barrier_value<T: Real>(shaping: &Shaping<T>, z: T, alignment: T) -> T {
    z - shaping.z_d_star - shaping.kappa_a.eval(alignment)
}

/// Alignment and barrier values together with their configuration gradients.
#[derive(Clone, Debug)]
pub struct BarrierState<T: Real> {
    pub r_x: T,
    pub r_y: T,
    pub r_o: T,
    /// `A`.
    pub alignment: T,
    /// `∇A`.
    pub grad_alignment: DVector<T>,
    /// Normal coordinate `Z`.
    pub z: T,
    /// `∇Z` (equals `∇r_Z`: the insertion target is a constant).
    pub grad_z: DVector<T>,
    /// `B`.
    pub barrier: T,
    /// `∇B = ∇Z - kappa_a'(A)·∇A`.
    pub grad_barrier: DVector<T>,
}

/// Evaluates alignment and barrier (with gradients) from precomputed chain
/// frames and task gradients.
pub fn barrier_state_from_frames<T: Real>(
    frames: &KinematicFrames<T>,
    grads: &TaskGradients<T>,
    shaping: &Shaping<T>,
    target: &PlanarTarget<T>,
) -> BarrierState<T> {
    let ee = &frames.ee;
    let r_x = ee.x() - target.x_ref;
    let r_y = ee.y() - target.y_ref;
    let r_o = T::one() + ee.z_axis()[2];
    let alignment = alignment_value(shaping, r_x, r_y, r_o);

    let (dv_dx, dv_dy) = shaping.v_a_xy.grad(r_x, r_y);
    let dko = shaping.kappa_a_o.derivative(r_o);
    let grad_alignment =
        &grads.grad_x * dv_dx + &grads.grad_y * dv_dy + &grads.grad_r_o * dko;

    let z = ee.z();
    let grad_z = grads.grad_z.clone();
    let barrier = barrier_value(shaping, z, alignment);
    let dka = shaping.kappa_a.derivative(alignment);
    let grad_barrier = &grad_z - &grad_alignment * dka;

    BarrierState {
        r_x,
        r_y,
        r_o,
        alignment,
        grad_alignment,
        z,
        grad_z,
        barrier,
        grad_barrier,
    }
}

/// Convenience wrapper running the chain for a single evaluation.
pub fn barrier_state<T: Real>(
    model: &RobotModel<T>,
    q: &Configuration<T>,
    shaping: &Shaping<T>,
    target: &PlanarTarget<T>,
) -> Result<BarrierState<T>> {
    let frames = model.frames(q)?;
    let grads = model.grad_task_from_frames(&frames);
    Ok(barrier_state_from_frames(&frames, &grads, shaping, target))
}
