//! Floating-base serial-chain kinematics expressed in the surface plane frame.
//!
//! The robot is a vehicle base (position `x, y, z` and yaw `psi`, with roll and
//! pitch held at constant trim values) carrying a serial manipulator with `k`
//! joints, so a configuration is the `n = 4 + k` vector
//! `q = [x, y, z, psi, q_m1, ..., q_mk]`.
//!
//! Everything is expressed in the *plane frame* `P` attached to the target
//! surface: its `z` axis `ě_z` is the outward surface normal, so the third
//! component of an end-effector position is the normal coordinate `Z` used by
//! the force task, and the task axis `ž` is the end-effector tool direction in
//! `P`. Yaw rotates the vehicle about the world vertical; expressed in `P`
//! that axis is the constant unit vector [`RobotModel::yaw_axis`], which must
//! not be parallel to the surface normal (a horizontal surface is degenerate
//! for yaw-based alignment and is rejected by validation).

use nalgebra::{DVector, Isometry3, Matrix3xX, Rotation3, Translation3, Unit, UnitQuaternion, Vector3};

use crate::error::{Error, Result};
use crate::scalar::{real, Real};

/// Number of vehicle degrees of freedom (`x, y, z, psi`).
pub const BASE_DOF: usize = 4;

/// Robot configuration `[x, y, z, psi, q_m...]` with the vehicle position in
/// plane-frame meters, yaw in radians, and manipulator joint values in radians
/// (revolute) or meters (prismatic).
#[derive(Clone, Debug, PartialEq)]
pub struct Configuration<T: Real>(DVector<T>);

impl<T: Real> Configuration<T> {
    /// Builds a configuration from the vehicle coordinates and arm values.
    pub fn new(x: T, y: T, z: T, psi: T, arm: &[T]) -> Self {
        let mut v = DVector::zeros(BASE_DOF + arm.len());
        v[0] = x;
        v[1] = y;
        v[2] = z;
        v[3] = psi;
        v.as_mut_slice()[BASE_DOF..].copy_from_slice(arm);
        Configuration(v)
    }

    /// Wraps a raw vector, checking dimension and finiteness.
    pub fn from_vector(v: DVector<T>) -> Result<Self> {
        if v.len() < BASE_DOF + 1 {
            return Err(Error::DimensionMismatch {
                expected: BASE_DOF + 1,
                got: v.len(),
                context: "configuration needs at least one manipulator joint",
            });
        }
        if v.iter().any(|e| !e.is_finite()) {
            return Err(Error::Precondition(
                "configuration entries must be finite".into(),
            ));
        }
        Ok(Configuration(v))
    }

    /// Total dimension `n = 4 + k`.
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Number of manipulator joints `k`.
    pub fn arm_dof(&self) -> usize {
        self.0.len() - BASE_DOF
    }

    pub fn x(&self) -> T {
        self.0[0]
    }

    pub fn y(&self) -> T {
        self.0[1]
    }

    pub fn z(&self) -> T {
        self.0[2]
    }

    pub fn psi(&self) -> T {
        self.0[3]
    }

    /// Manipulator joint values.
    pub fn arm(&self) -> &[T] {
        &self.0.as_slice()[BASE_DOF..]
    }

    /// Read-only view of the underlying vector.
    pub fn vector(&self) -> &DVector<T> {
        &self.0
    }

    /// Consumes the configuration, returning the underlying vector.
    pub fn into_vector(self) -> DVector<T> {
        self.0
    }
}

/// Kind of a manipulator joint.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JointKind {
    Revolute,
    Prismatic,
}

/// One manipulator joint: a fixed rigid offset from the previous frame,
/// followed by the joint motion about/along `axis` (unit, in the joint frame).
#[derive(Clone, Debug)]
pub struct Joint<T: Real> {
    pub kind: JointKind,
    pub origin: Isometry3<T>,
    pub axis: Unit<Vector3<T>>,
}

/// Robot model: surface plane placement, vehicle trim, manipulator chain.
#[derive(Clone, Debug)]
pub struct RobotModel<T: Real> {
    /// Plane-frame origin in world coordinates (bookkeeping only; the control
    /// problem is posed entirely in the plane frame).
    pub plane_position: Vector3<T>,
    /// Rotation of the plane frame in the world frame (columns are the plane
    /// axes expressed in world coordinates; the third column is the outward
    /// surface normal).
    pub plane_rotation: Rotation3<T>,
    /// Constant vehicle roll (radians).
    pub phi: T,
    /// Constant vehicle pitch (radians).
    pub theta: T,
    /// Manipulator chain, base to tip.
    pub joints: Vec<Joint<T>>,
    /// Fixed transform from the last joint frame to the end-effector frame;
    /// the end-effector `z` axis is the tool direction.
    pub tool: Isometry3<T>,
}

/// End-effector pose in the plane frame.
#[derive(Clone, Debug)]
pub struct EndEffectorState<T: Real> {
    pub pose: Isometry3<T>,
}

impl<T: Real> EndEffectorState<T> {
    /// Position in the plane frame.
    pub fn position(&self) -> Vector3<T> {
        self.pose.translation.vector
    }

    /// Tangential coordinate `X`.
    pub fn x(&self) -> T {
        self.pose.translation.vector[0]
    }

    /// Tangential coordinate `Y`.
    pub fn y(&self) -> T {
        self.pose.translation.vector[1]
    }

    /// Normal coordinate `Z` (positive in front of the surface).
    pub fn z(&self) -> T {
        self.pose.translation.vector[2]
    }

    /// Tool `x` axis in the plane frame.
    pub fn x_axis(&self) -> Vector3<T> {
        self.rotation_column(0)
    }

    /// Tool `y` axis in the plane frame.
    pub fn y_axis(&self) -> Vector3<T> {
        self.rotation_column(1)
    }

    /// Tool direction `ž` in the plane frame.
    pub fn z_axis(&self) -> Vector3<T> {
        self.rotation_column(2)
    }

    fn rotation_column(&self, c: usize) -> Vector3<T> {
        self.pose.rotation.to_rotation_matrix().matrix().column(c).into_owned()
    }

    /// Largest deviation of the rotation part from orthonormality,
    /// `max |RᵀR - I|`; useful as a numerical health check.
    pub fn orthonormality_defect(&self) -> T {
        let r = self.pose.rotation.to_rotation_matrix();
        let e = r.matrix().transpose() * r.matrix() - nalgebra::Matrix3::identity();
        e.iter().fold(T::zero(), |acc, v| acc.max(v.abs()))
    }
}

/// Per-joint frame data produced while running the chain, used to assemble
/// analytic gradients.
#[derive(Clone, Debug)]
pub struct KinematicFrames<T: Real> {
    /// Vehicle position in the plane frame.
    pub vehicle_position: Vector3<T>,
    /// Joint frame origins in the plane frame (one per joint).
    pub joint_origins: Vec<Vector3<T>>,
    /// Joint axes in the plane frame (one per joint).
    pub joint_axes: Vec<Vector3<T>>,
    /// End-effector state.
    pub ee: EndEffectorState<T>,
}

/// Gradients of the task quantities with respect to the full configuration.
///
/// The vehicle-translation block is assembled from the identities
/// `∂(X,Y,Z)/∂(x,y,z) = I` and `∂ž/∂(x,y,z) = 0`, so those twelve entries are
/// exact constants rather than numerically computed values.
#[derive(Clone, Debug)]
pub struct TaskGradients<T: Real> {
    /// `∇X` (length `n`).
    pub grad_x: DVector<T>,
    /// `∇Y` (length `n`).
    pub grad_y: DVector<T>,
    /// `∇Z` (length `n`).
    pub grad_z: DVector<T>,
    /// `∇r_O` where `r_O = 1 + ě_zᵀž` (length `n`).
    pub grad_r_o: DVector<T>,
    /// Columns are `∂ž/∂q_i` (3 × `n`).
    pub z_axis_jacobian: Matrix3xX<T>,
}

impl<T: Real> RobotModel<T> {
    /// Configuration dimension `n = 4 + k` for this model.
    pub fn dof(&self) -> usize {
        BASE_DOF + self.joints.len()
    }

    /// The vehicle yaw axis expressed in the plane frame: the world vertical
    /// `R_planeᵀ·ě_z_world`. Constant because roll and pitch are trimmed.
    pub fn yaw_axis(&self) -> Vector3<T> {
        self.plane_rotation.inverse() * Vector3::z()
    }

    /// `a_y = ě_z × ǎ_z`: tangential direction picked out by the yaw axis.
    /// Nonzero whenever the surface is not horizontal (validated).
    pub fn a_y(&self) -> Vector3<T> {
        Vector3::z().cross(&self.yaw_axis())
    }

    /// Checks the model: at least one joint, orthonormal plane rotation,
    /// finite trim, unit joint axes, and a yaw axis transverse to the surface
    /// normal.
    pub fn validate(&self) -> Result<()> {
        if self.joints.is_empty() {
            return Err(Error::InvalidModel(
                "model needs at least one manipulator joint".into(),
            ));
        }
        let r = self.plane_rotation.matrix();
        let defect = (r.transpose() * r - nalgebra::Matrix3::identity())
            .iter()
            .fold(T::zero(), |acc, v| acc.max(v.abs()));
        if defect > real(1e-9) {
            return Err(Error::InvalidModel(format!(
                "plane rotation is not orthonormal (defect {:?})",
                defect.to_f64()
            )));
        }
        if (r.determinant() - T::one()).abs() > real(1e-9) {
            return Err(Error::InvalidModel("plane rotation must be proper".into()));
        }
        if !self.phi.is_finite() || !self.theta.is_finite() {
            return Err(Error::InvalidModel("trim angles must be finite".into()));
        }
        for (j, joint) in self.joints.iter().enumerate() {
            if (joint.axis.norm() - T::one()).abs() > real(1e-9) {
                return Err(Error::InvalidModel(format!("joint {j} axis is not unit")));
            }
        }
        let ay_norm = self.a_y().norm();
        if ay_norm <= real(1e-6) {
            return Err(Error::InvalidModel(
                "yaw axis is (numerically) parallel to the surface normal; yaw cannot steer \
                 the tool direction on a horizontal surface"
                    .into(),
            ));
        }
        Ok(())
    }

    /// Pose of the vehicle frame in the plane frame at the given base
    /// coordinates.
    pub fn vehicle_pose(&self, x: T, y: T, z: T, psi: T) -> Isometry3<T> {
        let attitude_world = Rotation3::from_axis_angle(&Vector3::z_axis(), psi)
            * Rotation3::from_axis_angle(&Vector3::y_axis(), self.theta)
            * Rotation3::from_axis_angle(&Vector3::x_axis(), self.phi);
        let rotation = self.plane_rotation.inverse() * attitude_world;
        Isometry3::from_parts(
            Translation3::new(x, y, z),
            UnitQuaternion::from_rotation_matrix(&rotation),
        )
    }

    fn check_dim(&self, q: &Configuration<T>) -> Result<()> {
        if q.dim() != self.dof() {
            return Err(Error::DimensionMismatch {
                expected: self.dof(),
                got: q.dim(),
                context: "configuration vs. robot model",
            });
        }
        Ok(())
    }

    /// Runs the chain, returning all intermediate frames.
    pub fn frames(&self, q: &Configuration<T>) -> Result<KinematicFrames<T>> {
        self.check_dim(q)?;
        let mut t = self.vehicle_pose(q.x(), q.y(), q.z(), q.psi());
        let vehicle_position = t.translation.vector;
        let mut joint_origins = Vec::with_capacity(self.joints.len());
        let mut joint_axes = Vec::with_capacity(self.joints.len());
        for (joint, &qj) in self.joints.iter().zip(q.arm()) {
            t *= joint.origin;
            joint_origins.push(t.translation.vector);
            joint_axes.push(t.rotation * joint.axis.into_inner());
            match joint.kind {
                JointKind::Revolute => {
                    let rot = UnitQuaternion::from_axis_angle(&joint.axis, qj);
                    t *= Isometry3::from_parts(Translation3::identity(), rot);
                }
                JointKind::Prismatic => {
                    let shift = joint.axis.into_inner() * qj;
                    t *= Isometry3::from_parts(Translation3::from(shift), UnitQuaternion::identity());
                }
            }
        }
        t *= self.tool;
        Ok(KinematicFrames {
            vehicle_position,
            joint_origins,
            joint_axes,
            ee: EndEffectorState { pose: t },
        })
    }

    /// End-effector pose in the plane frame.
    pub fn forward_kinematics(&self, q: &Configuration<T>) -> Result<EndEffectorState<T>> {
        Ok(self.frames(q)?.ee)
    }

    /// Rotation axis `ň_j` of manipulator joint `j` in the plane frame; the
    /// zero vector for prismatic joints (sliding contributes nothing to the
    /// tool direction).
    pub fn joint_axis(&self, q: &Configuration<T>, j: usize) -> Result<Vector3<T>> {
        if j >= self.joints.len() {
            return Err(Error::DimensionMismatch {
                expected: self.joints.len(),
                got: j,
                context: "joint index",
            });
        }
        let frames = self.frames(q)?;
        Ok(match self.joints[j].kind {
            JointKind::Revolute => frames.joint_axes[j],
            JointKind::Prismatic => Vector3::zeros(),
        })
    }

    /// Analytic gradients of `X`, `Y`, `Z`, `r_O`, and `ž` with respect to the
    /// full configuration, assembled from the chain frames.
    pub fn grad_task(&self, q: &Configuration<T>) -> Result<TaskGradients<T>> {
        let frames = self.frames(q)?;
        Ok(self.grad_task_from_frames(&frames))
    }

    /// Same as [`grad_task`](Self::grad_task) but reusing previously computed
    /// frames (the controller pipeline calls both).
    pub fn grad_task_from_frames(&self, frames: &KinematicFrames<T>) -> TaskGradients<T> {
        let n = self.dof();
        let mut grad_x = DVector::zeros(n);
        let mut grad_y = DVector::zeros(n);
        let mut grad_z = DVector::zeros(n);
        let mut grad_r_o = DVector::zeros(n);
        let mut z_axis_jacobian = Matrix3xX::zeros(n);

        // Vehicle translation block: exact constants.
        grad_x[0] = T::one();
        grad_y[1] = T::one();
        grad_z[2] = T::one();
        // grad_r_o[0..3] and the first three Jacobian columns stay exactly 0.

        let p_ee = frames.ee.position();
        let z_tool = frames.ee.z_axis();
        let e_z = Vector3::z();

        // Yaw: rotation of everything distal about the yaw axis through the
        // vehicle center.
        let yaw_axis = self.yaw_axis();
        let a_y = self.a_y();
        let lin_psi = yaw_axis.cross(&(p_ee - frames.vehicle_position));
        grad_x[3] = lin_psi[0];
        grad_y[3] = lin_psi[1];
        grad_z[3] = lin_psi[2];
        let dz_dpsi = yaw_axis.cross(&z_tool);
        z_axis_jacobian.set_column(3, &dz_dpsi);
        grad_r_o[3] = a_y.dot(&z_tool);

        for (j, joint) in self.joints.iter().enumerate() {
            let col = BASE_DOF + j;
            match joint.kind {
                JointKind::Revolute => {
                    let axis = frames.joint_axes[j];
                    let lin = axis.cross(&(p_ee - frames.joint_origins[j]));
                    grad_x[col] = lin[0];
                    grad_y[col] = lin[1];
                    grad_z[col] = lin[2];
                    let dz = axis.cross(&z_tool);
                    z_axis_jacobian.set_column(col, &dz);
                    grad_r_o[col] = e_z.cross(&axis).dot(&z_tool);
                }
                JointKind::Prismatic => {
                    let dir = frames.joint_axes[j];
                    grad_x[col] = dir[0];
                    grad_y[col] = dir[1];
                    grad_z[col] = dir[2];
                    // Tool direction is unaffected by sliding: columns stay 0.
                }
            }
        }

        TaskGradients {
            grad_x,
            grad_y,
            grad_z,
            grad_r_o,
            z_axis_jacobian,
        }
    }

    /// Desk-scale reference platform: a vehicle with a two-link planar arm
    /// (0.15 m links, mounted 0.06 m below the vehicle center, both joints
    /// pitching about the body `y` axis) and a tool pointing along the arm.
    ///
    /// `incline` tilts the target surface away from vertical about the world
    /// `y` axis: `0` is a vertical wall whose outward normal faces the world
    /// `-x` direction, `π/6` leans the wall back by 30°. The plane frame keeps
    /// the world vertical in its `x`–`z` plane, so the yaw axis is
    /// `(cos incline, 0, sin incline)` in plane coordinates.
    pub fn desk(incline: T) -> Self {
        // Vertical-wall plane axes in world coordinates: x̌ up, y̌ along the
        // wall, ž = outward normal (towards negative world x).
        let vertical = Rotation3::from_matrix_unchecked(nalgebra::Matrix3::from_columns(&[
            Vector3::z(),
            Vector3::y(),
            -Vector3::x(),
        ]));
        let plane_rotation = Rotation3::from_axis_angle(&Vector3::y_axis(), incline) * vertical;
        let link = real::<T>(0.15);
        let mount = real::<T>(0.06);
        RobotModel {
            plane_position: Vector3::new(real(0.8), T::zero(), real(0.5)),
            plane_rotation,
            phi: T::zero(),
            theta: T::zero(),
            joints: vec![
                Joint {
                    kind: JointKind::Revolute,
                    origin: Isometry3::translation(T::zero(), T::zero(), -mount),
                    axis: Vector3::y_axis(),
                },
                Joint {
                    kind: JointKind::Revolute,
                    origin: Isometry3::translation(T::zero(), T::zero(), -link),
                    axis: Vector3::y_axis(),
                },
            ],
            tool: Isometry3::from_parts(
                Translation3::new(T::zero(), T::zero(), -link),
                UnitQuaternion::from_axis_angle(&Vector3::y_axis(), T::pi()),
            ),
        }
    }
}
