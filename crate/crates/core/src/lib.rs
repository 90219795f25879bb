//! Safe normal-force exertion for floating-base manipulators.
//!
//! `safepress` implements a velocity-level controller for an aerial (or
//! otherwise floating-base) platform with an onboard arm that must press a
//! tool against a work surface with a prescribed normal force — without a
//! model of the surface's stiffness, and without ever letting an ill-aligned
//! tool bear force.
//!
//! The central idea is a scalar *insertion/alignment barrier*
//!
//! ```text
//! B(q) = Z(q) - Z_d* - kappa_a(A(q))
//! ```
//!
//! where `Z` is the tool's signed distance from the surface (negative =
//! pressed in), `A ≥ 0` aggregates planar position error and tool/surface
//! misalignment, and `kappa_a` is a strictly increasing shaping curve.
//! Keeping `B ≥ 0` confines the system to configurations that are pressed
//! in *only to the extent that they are aligned*. Each control cycle solves
//! a small convex QP:
//!
//! * the objective tracks a force-feedback descent direction for the
//!   measured normal force (no stiffness model needed) and damps the
//!   remaining coordinates;
//! * one linear constraint enforces the barrier condition
//!   `∇Bᵀ·u ≥ -kappa_b(B)`;
//! * box constraints encode actuator rate limits and tapered joint stops.
//!
//! The resulting closed loop provably keeps the safe set invariant, descends
//! a force-error potential whenever the barrier certificate holds, and
//! descends the alignment aggregate whenever the vertical rate is
//! unconstrained; its rest points are exactly the desired press
//! configurations plus a thin, explicitly characterized set of spurious
//! boundary equilibria. The [`analysis`] module turns each of those
//! statements into executable checks, and the [`simulator`] module
//! reproduces desk-scale experiments against spring-like force models.
//!
//! # Layout
//!
//! * [`scalar`] — the [`Real`] scalar abstraction (`f32`/`f64`).
//! * [`shaping`] — the class-K-like shaping curves and their calculus.
//! * [`kinematics`] — surface-frame robot model and task gradients.
//! * [`task`] — task coordinates, alignment aggregate, and the barrier.
//! * [`limits`] — rate limits, tapered joint stops, feasibility margins.
//! * [`qp`] — a dense active-set solver for the controller QP.
//! * [`controller`] — the control law: one QP per cycle.
//! * [`environment`] — spring-like force models (simulation only).
//! * [`simulator`] — scenarios, presets, RK4 closed loop, CSV logs.
//! * [`analysis`] — audits, equilibrium classification, diagnostics.
//! * [`config`] — TOML scenario files.
//!
//! Everything numeric is generic over [`Real`]; the `*64` aliases at the
//! crate root fix `f64` for the common case.
//!
//! # Example
//!
//! ```
//! use safepress::simulator::{run_scenario, Scenario};
//! use safepress::analysis::{audit_trajectory, AuditTolerances};
//!
//! let mut scenario = Scenario::<f64>::preset("exp1").unwrap();
//! scenario.duration = 2.0; // keep the doctest quick
//! let trajectory = run_scenario(&scenario).unwrap();
//! let controller = scenario.controller().unwrap();
//! let audit = audit_trajectory(
//!     &trajectory,
//!     &controller,
//!     &AuditTolerances::standard(),
//! )
//! .unwrap();
//! assert!(audit.barrier_ok);
//! ```

pub mod analysis;
pub mod config;
pub mod controller;
pub mod environment;
pub mod error;
pub mod kinematics;
pub mod limits;
pub mod qp;
pub mod scalar;
pub mod shaping;
pub mod simulator;
pub mod task;

pub use error::{Error, Result};
pub use scalar::Real;

/// `f64` configuration vector.
pub type Configuration64 = kinematics::Configuration<f64>;
/// `f64` robot model.
pub type RobotModel64 = kinematics::RobotModel<f64>;
/// `f64` shaping bundle.
pub type Shaping64 = shaping::Shaping<f64>;
/// `f64` limit configuration.
pub type LimitConfig64 = limits::LimitConfig<f64>;
/// `f64` force model.
pub type ForceModel64 = environment::ForceModel<f64>;
/// `f64` controller.
pub type Controller64 = controller::Controller<f64>;
/// `f64` control outcome.
pub type ControlOutcome64 = controller::ControlOutcome<f64>;
/// `f64` QP solution.
pub type QpSolution64 = qp::QpSolution<f64>;
/// `f64` scenario.
pub type Scenario64 = simulator::Scenario<f64>;
/// `f64` trajectory.
pub type Trajectory64 = simulator::Trajectory<f64>;
/// `f64` planar target.
pub type PlanarTarget64 = task::PlanarTarget<f64>;
