//! The safety-filtered force controller.
//!
//! Each call maps a measured state `(q, F)` to a commanded generalized
//! velocity by solving
//!
//! ```text
//! min_mu  (∇r_Zᵀmu + kappa_f)² + muᵀE·mu
//! s.t.    ∇Bᵀmu ≥ -kappa_b(B)
//!         velocity box from the limit blending
//! ```
//!
//! where `kappa_f = kappa_f(Z, F - F_d)` is the model-free slope of the force
//! potential and `B` the alignment-gated barrier. The damping matrix
//! `E = diag(epsilon)` keeps the problem strictly convex in every direction
//! except `ż`, whose epsilon entry is pinned to zero so that the normal rate
//! absorbs the resolved-rate error exactly: whenever neither the barrier row
//! nor a `ż` bound binds, the optimum satisfies `∇r_Zᵀmu + kappa_f = 0`
//! identically and the commanded motion is the pure normal descent
//! `mu = -kappa_f·ě₃`.
//!
//! Multipliers returned here are normalized to this "resolved-rate" objective
//! (half the raw duals of the `½·muᵀH·mu` form solved internally), so that
//! the barrier dual equals the resolved-rate error `∇r_Zᵀmu + kappa_f` at any
//! solution where `ż` is unconstrained — the quantity the equilibrium
//! classifier inspects.
//!
//! If the barrier row cannot be satisfied anywhere in the velocity box, the
//! controller commands zero velocity (a safe hold: the kinematic plant then
//! keeps `B` constant) and flags the step.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::kinematics::{Configuration, RobotModel};
use crate::limits::{Bounds, LimitConfig};
use crate::qp::{self, QpSolution, QpStatus};
use crate::scalar::{real, Real};
use crate::shaping::Shaping;
use crate::task::{barrier_state_from_frames, dvf_drz, BarrierState, PlanarTarget};

/// Everything produced by one controller evaluation.
#[derive(Clone, Debug)]
pub struct ControlOutcome<T: Real> {
    /// Commanded generalized velocity (zeros when the step is infeasible).
    pub command: DVector<T>,
    /// Barrier/alignment snapshot the command was computed from.
    pub barrier: BarrierState<T>,
    /// Force-potential slope `kappa_f(Z, F - F_d)` used in the objective.
    pub kappa_f: T,
    /// Velocity box after limit blending.
    pub bounds: Bounds<T>,
    /// QP solution with duals in the resolved-rate normalization.
    pub qp: QpSolution<T>,
    /// False when the barrier row was unsatisfiable and the zero-hold fired.
    pub feasible: bool,
}

impl<T: Real> ControlOutcome<T> {
    /// Resolved-rate error `∇r_Zᵀmu + kappa_f` of the commanded velocity.
    ///
    /// At feasible solutions where `ż` is not at a box face this equals the
    /// (normalized) barrier dual `lambda`.
    pub fn resolved_rate_error(&self) -> T {
        self.barrier.grad_z.dot(&self.command) + self.kappa_f
    }
}

/// The controller: model + shaping + limits + damping, validated once.
#[derive(Clone, Debug)]
pub struct Controller<T: Real> {
    model: RobotModel<T>,
    shaping: Shaping<T>,
    limits: LimitConfig<T>,
    epsilon: DVector<T>,
}

impl<T: Real> Controller<T> {
    /// Builds a controller after cross-validating all components.
    pub fn new(
        model: RobotModel<T>,
        shaping: Shaping<T>,
        limits: LimitConfig<T>,
        epsilon: DVector<T>,
    ) -> Result<Self> {
        model.validate()?;
        shaping.validate()?;
        limits.validate()?;
        if limits.arm_dof() != model.joints.len() {
            return Err(Error::DimensionMismatch {
                expected: model.joints.len(),
                got: limits.arm_dof(),
                context: "controller: limit config arm dof vs. model joints",
            });
        }
        if epsilon.len() != model.dof() {
            return Err(Error::DimensionMismatch {
                expected: model.dof(),
                got: epsilon.len(),
                context: "controller: damping vector length",
            });
        }
        if epsilon.iter().any(|&e| !(e >= T::zero()) || !e.is_finite()) {
            return Err(Error::Precondition(
                "controller damping entries must be finite and nonnegative".into(),
            ));
        }
        if epsilon[2] != T::zero() {
            return Err(Error::Precondition(
                "the ż damping entry epsilon[2] must be exactly zero".into(),
            ));
        }
        Ok(Self {
            model,
            shaping,
            limits,
            epsilon,
        })
    }

    /// Damping diagonal used for the desk experiments:
    /// `0.04` on planar translation, `0` on `ż`, `4·10⁻⁵` on yaw and
    /// `3·10⁻⁶` per arm joint.
    pub fn desk_epsilon(dof: usize) -> DVector<T> {
        assert!(dof >= 5, "need the four vehicle entries plus an arm");
        let mut e = DVector::zeros(dof);
        e[0] = real::<T>(0.04);
        e[1] = real::<T>(0.04);
        e[2] = T::zero();
        e[3] = real::<T>(4e-5);
        for i in 4..dof {
            e[i] = real::<T>(3e-6);
        }
        e
    }

    pub fn model(&self) -> &RobotModel<T> {
        &self.model
    }

    pub fn shaping(&self) -> &Shaping<T> {
        &self.shaping
    }

    pub fn limits(&self) -> &LimitConfig<T> {
        &self.limits
    }

    pub fn epsilon(&self) -> &DVector<T> {
        &self.epsilon
    }

    /// One control evaluation: measured configuration and normal force in,
    /// commanded velocity (plus full diagnostics) out.
    pub fn control(
        &self,
        q: &Configuration<T>,
        f_measured: T,
        target: &PlanarTarget<T>,
    ) -> Result<ControlOutcome<T>> {
        let frames = self.model.frames(q)?;
        let grads = self.model.grad_task_from_frames(&frames);
        let barrier = barrier_state_from_frames(&frames, &grads, &self.shaping, target);
        let kappa_f = dvf_drz(&self.shaping, barrier.z, f_measured);
        let bounds = self.limits.velocity_bounds(q)?;

        let problem = qp::assemble(
            &barrier.grad_z,
            kappa_f,
            &barrier.grad_barrier,
            self.shaping.kappa_b.eval(barrier.barrier),
            bounds.clone(),
            &self.epsilon,
        )?;
        let raw = qp::solve(&problem)?;

        if raw.status == QpStatus::Infeasible {
            let n = q.dim();
            return Ok(ControlOutcome {
                command: DVector::zeros(n),
                barrier,
                kappa_f,
                bounds,
                qp: raw,
                feasible: false,
            });
        }

        // Rescale duals from the ½·muᵀH·mu convention to the resolved-rate
        // one (both objectives have the same minimizer; duals halve).
        let half = real::<T>(0.5);
        let raw_res = qp::kkt_residuals(&problem, &raw);
        let mut sol = raw;
        sol.lambda *= half;
        sol.lambda_lower *= half;
        sol.lambda_upper *= half;
        sol.kkt_residual = raw_res
            .primal
            .max(raw_res.stationarity * half)
            .max(raw_res.dual * half)
            .max(raw_res.complementarity * half);

        Ok(ControlOutcome {
            command: sol.mu.clone(),
            barrier,
            kappa_f,
            bounds,
            qp: sol,
            feasible: true,
        })
    }
}
