//! Property suites: randomized invariants of the kinematics, task maps,
//! shaping families, QP solver, and controller, checked against the
//! independent oracles in `support`.

mod support;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use safepress::kinematics::{Configuration, Joint, JointKind, RobotModel};
use safepress::limits::{b_star, margin_from_parts, Bound, Bounds, LimitConfig, Margin};
use safepress::qp::{self, QpProblem, QpStatus};
use safepress::shaping::{AlignmentPotential, Kappa1, Shaping};
use safepress::task::{barrier_state, PlanarTarget};
use safepress::controller::Controller;

fn desk_configs() -> impl Strategy<Value = (f64, Vec<f64>)> {
    // Incline in degrees plus a six-entry configuration vector.
    (
        prop_oneof![Just(0.0), Just(30.0), -45.0..45.0f64],
        prop::collection::vec(-1.0..1.0f64, 6),
    )
        .prop_map(|(incline, mut raw)| {
            // Scale entries into desk-plausible ranges.
            raw[2] = raw[2] * 0.8 + 0.5; // z in [-0.3, 1.3]
            raw[3] *= 0.6; // psi
            raw[4] *= 1.2; // first joint inside ±70°
            raw[5] *= 1.8; // second joint inside ±105°
            (incline, raw)
        })
}

fn model_and_q(incline_deg: f64, raw: &[f64]) -> (RobotModel<f64>, Configuration<f64>) {
    let model = RobotModel::desk(incline_deg.to_radians());
    let q = Configuration::new(raw[0], raw[1], raw[2], raw[3], &raw[4..]);
    (model, q)
}

/// A longer mixed revolute/prismatic chain exercising the generic FK path
/// (n = 8, off-axis joints, a prismatic slide).
fn mixed_chain(incline_deg: f64) -> RobotModel<f64> {
    use nalgebra::{Isometry3, Translation3, Unit, UnitQuaternion, Vector3};
    let mut model = RobotModel::desk(incline_deg.to_radians());
    model.joints = vec![
        Joint {
            kind: JointKind::Revolute,
            origin: Isometry3::translation(0.0, 0.02, -0.05),
            axis: Unit::new_normalize(Vector3::new(0.0, 1.0, 0.2)),
        },
        Joint {
            kind: JointKind::Prismatic,
            origin: Isometry3::from_parts(
                Translation3::new(0.01, 0.0, -0.12),
                UnitQuaternion::from_axis_angle(&Vector3::x_axis(), 0.3),
            ),
            axis: Unit::new_normalize(Vector3::new(0.1, 0.0, 1.0)),
        },
        Joint {
            kind: JointKind::Revolute,
            origin: Isometry3::translation(0.0, -0.01, -0.1),
            axis: Unit::new_normalize(Vector3::new(1.0, 0.1, 0.0)),
        },
        Joint {
            kind: JointKind::Revolute,
            origin: Isometry3::from_parts(
                Translation3::new(0.0, 0.0, -0.08),
                UnitQuaternion::from_axis_angle(&Vector3::z_axis(), -0.2),
            ),
            axis: Unit::new_normalize(Vector3::new(0.0, 1.0, -0.1)),
        },
    ];
    model
}

proptest! {
    // -----------------------------------------------------------------------
    // Kinematics against the plain-matrix oracle
    // -----------------------------------------------------------------------

    #[test]
    fn fk_matches_matrix_oracle((incline, raw) in desk_configs()) {
        let (model, q) = model_and_q(incline, &raw);
        let ee = model.forward_kinematics(&q).unwrap();
        let oracle = support::oracle_forward_kinematics(&model, &q);
        prop_assert!((ee.x() - oracle[0][3]).abs() <= 1e-12);
        prop_assert!((ee.y() - oracle[1][3]).abs() <= 1e-12);
        prop_assert!((ee.z() - oracle[2][3]).abs() <= 1e-12);
        let zhat = ee.z_axis();
        for i in 0..3 {
            prop_assert!((zhat[i] - oracle[i][2]).abs() <= 1e-12);
        }
    }

    #[test]
    fn fk_matches_matrix_oracle_on_mixed_chain(
        incline in -40.0..40.0f64,
        raw in prop::collection::vec(-1.0..1.0f64, 8),
    ) {
        let model = mixed_chain(incline);
        let q = Configuration::new(raw[0], raw[1], raw[2] + 0.5, raw[3], &raw[4..]);
        let ee = model.forward_kinematics(&q).unwrap();
        let oracle = support::oracle_forward_kinematics(&model, &q);
        prop_assert!((ee.x() - oracle[0][3]).abs() <= 1e-12);
        prop_assert!((ee.y() - oracle[1][3]).abs() <= 1e-12);
        prop_assert!((ee.z() - oracle[2][3]).abs() <= 1e-12);
        prop_assert!(ee.orthonormality_defect() <= 1e-9);
    }

    #[test]
    fn translation_partials_hold_exactly((incline, raw) in desk_configs()) {
        let (model, q) = model_and_q(incline, &raw);
        let g = model.grad_task(&q).unwrap();
        // Twelve identities: the (x, y, z) block of each task gradient is a
        // fixed pattern, bit-exact, at every configuration.
        let expected = [
            (&g.grad_x, [1.0, 0.0, 0.0]),
            (&g.grad_y, [0.0, 1.0, 0.0]),
            (&g.grad_z, [0.0, 0.0, 1.0]),
            (&g.grad_r_o, [0.0, 0.0, 0.0]),
        ];
        for (grad, pattern) in expected {
            for (i, want) in pattern.iter().enumerate() {
                prop_assert_eq!(grad[i], *want);
            }
        }
    }

    #[test]
    fn task_gradients_match_central_differences((incline, raw) in desk_configs()) {
        let (model, q) = model_and_q(incline, &raw);
        let g = model.grad_task(&q).unwrap();
        let eval = |sel: usize| {
            let model = model.clone();
            move |v: &DVector<f64>| {
                let qv = Configuration::from_vector(v.clone()).unwrap();
                let ee = model.forward_kinematics(&qv).unwrap();
                match sel {
                    0 => ee.x(),
                    1 => ee.y(),
                    2 => ee.z(),
                    _ => 1.0 + ee.z_axis()[2],
                }
            }
        };
        for (sel, analytic) in [&g.grad_x, &g.grad_y, &g.grad_z, &g.grad_r_o]
            .into_iter()
            .enumerate()
        {
            let fd = support::central_gradient(eval(sel), q.vector(), 1e-6);
            let scale = 1.0 + analytic.amax();
            prop_assert!(
                (analytic - &fd).amax() <= 1e-6 * scale,
                "field {} gradient mismatch: {:?} vs {:?}",
                sel,
                analytic,
                fd
            );
        }
    }

    #[test]
    fn tool_axis_jacobian_matches_central_differences((incline, raw) in desk_configs()) {
        let (model, q) = model_and_q(incline, &raw);
        let g = model.grad_task(&q).unwrap();
        for i in 0..q.dim() {
            for row in 0..3 {
                let model = model.clone();
                let fd = support::central_gradient(
                    move |v: &DVector<f64>| {
                        let qv = Configuration::from_vector(v.clone()).unwrap();
                        model.forward_kinematics(&qv).unwrap().z_axis()[row]
                    },
                    q.vector(),
                    1e-6,
                );
                prop_assert!((g.z_axis_jacobian[(row, i)] - fd[i]).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn yaw_and_joint_axis_identities((incline, raw) in desk_configs()) {
        let (model, q) = model_and_q(incline, &raw);
        let frames = model.frames(&q).unwrap();
        let g = model.grad_task(&q).unwrap();
        let zhat = frames.ee.z_axis();
        let yaw = model.yaw_axis().cross(&zhat);
        for row in 0..3 {
            prop_assert!((g.z_axis_jacobian[(row, 3)] - yaw[row]).abs() <= 1e-12);
        }
        for (j, axis) in frames.joint_axes.iter().enumerate() {
            let cross = axis.cross(&zhat);
            for row in 0..3 {
                prop_assert!((g.z_axis_jacobian[(row, 4 + j)] - cross[row]).abs() <= 1e-12);
            }
        }
    }

    // -----------------------------------------------------------------------
    // Task maps and shaping families
    // -----------------------------------------------------------------------

    #[test]
    fn orientation_error_in_range_and_alignment_nonnegative((incline, raw) in desk_configs()) {
        let (model, q) = model_and_q(incline, &raw);
        let shaping = Shaping::desk_defaults(-3.0, -0.02);
        let target = PlanarTarget { x_ref: 0.05, y_ref: -0.04 };
        let st = barrier_state(&model, &q, &shaping, &target).unwrap();
        prop_assert!(st.r_o >= -1e-12 && st.r_o <= 2.0 + 1e-12);
        prop_assert!(st.alignment >= 0.0);
        // A is independent of the normal coordinate: the z entry of its
        // gradient vanishes identically.
        prop_assert_eq!(st.grad_alignment[2], 0.0);
        // kappa_a >= 0 makes the barrier a lower envelope of Z - Z_d*.
        prop_assert!(st.barrier <= st.z - shaping.z_d_star + 1e-15);
    }

    #[test]
    fn kappa_one_families_are_kappa_like(
        gain in 0.05..3.0f64,
        offset in 0.05..1.0f64,
        exponent in 0.2..2.5f64,
        s in -20.0..20.0f64,
        ds in 1e-6..5.0f64,
    ) {
        let families = [
            Kappa1::Linear { gain },
            Kappa1::SignedPower { gain, exponent },
            Kappa1::Saturating { gain, offset, power: 2 },
            Kappa1::Asymmetric { gain_above: gain, gain_below: gain * 1.3, exponent_below: exponent },
        ];
        for k in families {
            prop_assert_eq!(k.eval(0.0), 0.0);
            let (lo, hi) = (k.eval(s), k.eval(s + ds));
            prop_assert!(hi >= lo - 1e-12, "{:?} not monotone at {}", k, s);
            prop_assert!(k.eval(s) * s >= 0.0, "{:?} sign violation at {}", k, s);
        }
    }

    #[test]
    fn saturating_inverse_round_trips(
        gain in 0.5..3.0f64,
        offset in 0.05..1.0f64,
        y in 0.0..1.5f64,
    ) {
        let k = Kappa1::Saturating { gain, offset, power: 2 };
        // Keep y inside the attainable range sup = gain (approached as s→∞).
        let y = y.min(gain * 0.95);
        let s = k.inverse(y).unwrap();
        prop_assert!(s >= 0.0);
        prop_assert!((k.eval(s) - y).abs() <= 1e-9 * (1.0 + y));
    }

    #[test]
    fn force_slope_sign_follows_force_error(
        z in -0.5..0.5f64,
        fe in -6.0..6.0f64,
    ) {
        let shaping = Shaping::<f64>::desk_defaults(-3.0, -0.02);
        let v = shaping.kappa_f.eval(z, fe);
        prop_assert_eq!(shaping.kappa_f.eval(z, 0.0), 0.0);
        prop_assert!(v * fe >= 0.0);
    }

    #[test]
    fn alignment_potential_is_positive_definite(
        rx in -0.5..0.5f64,
        ry in -0.5..0.5f64,
    ) {
        let pot = AlignmentPotential::Quadratic { wx: 13.0, wy: 13.0 };
        let v = pot.eval(rx, ry);
        prop_assert!(v >= 0.0);
        prop_assert_eq!(pot.eval(0.0, 0.0), 0.0);
        let (gx, gy) = pot.grad(rx, ry);
        prop_assert!((gx - 26.0 * rx).abs() <= 1e-12);
        prop_assert!((gy - 26.0 * ry).abs() <= 1e-12);
    }

    // -----------------------------------------------------------------------
    // QP solver
    // -----------------------------------------------------------------------

    #[test]
    fn qp_solutions_satisfy_kkt_and_match_reference(seed in 0u64..400) {
        let mut rng = support::rng(0x5afe_0001 ^ seed);
        let n = rng.gen_range(2..=8);
        let p = support::random_feasible_instance(&mut rng, n);
        let sol = qp::solve(&p).unwrap();
        prop_assert_eq!(sol.status, QpStatus::Feasible);
        prop_assert!(qp::kkt_residuals(&p, &sol).max() <= 1e-8);
        let reference = support::reference_qp_solve(&p, 6000);
        prop_assert!(
            (&sol.mu - &reference).amax() <= 1e-6,
            "active-set {:?} vs projected-gradient {:?}",
            sol.mu,
            reference
        );
    }

    #[test]
    fn feasibility_sign_matches_solver_status(seed in 0u64..400) {
        let mut rng = support::rng(0x5afe_0002 ^ seed);
        let n = rng.gen_range(2..=8);
        let h = support::random_spd(&mut rng, n, 0.5, 5.0);
        let f = DVector::from_fn(n, |_, _| support::standard_normal(&mut rng));
        let g = DVector::from_fn(n, |_, _| support::standard_normal(&mut rng));
        let bounds = support::random_bounds(&mut rng, n, true);
        let gap = {
            let magnitude = rng.gen_range(0.01..2.0);
            if rng.gen_bool(0.5) { magnitude } else { -magnitude }
        };
        let sup = support::box_sup(&g, &bounds);
        let rhs = match sup {
            None => support::standard_normal(&mut rng) * 3.0,
            Some(s) => s - gap,
        };
        let p = QpProblem { h, f, cbf_row: g.clone(), cbf_rhs: rhs, bounds: bounds.clone() };
        let sol = qp::solve(&p).unwrap();

        // Library margin, oracle margin, and solver verdict must all agree.
        let margin = margin_from_parts(&g, &bounds, -rhs);
        let oracle_feasible = match sup {
            None => true,
            Some(s) => s >= rhs,
        };
        prop_assert_eq!(sol.status == QpStatus::Feasible, oracle_feasible);
        prop_assert_eq!(margin.is_nonnegative(), oracle_feasible);
        if let (Margin::Finite(m), Some(s)) = (margin, sup) {
            prop_assert!((m - (s - rhs)).abs() <= 1e-9 * (1.0 + s.abs() + rhs.abs()));
        }
        // The componentwise maximizer and the vertex-enumeration oracle agree
        // whenever the supremum is finite.
        if let Some(s) = sup {
            let choice = b_star(&g, &bounds);
            let mut acc = 0.0;
            for (i, b) in choice.iter().enumerate() {
                match b {
                    Bound::Finite(v) => acc += g[i] * v,
                    Bound::Unbounded => prop_assert_eq!(g[i], 0.0),
                }
            }
            prop_assert!((acc - s).abs() <= 1e-9 * (1.0 + s.abs()));
        }
    }

    #[test]
    fn slack_barrier_row_gives_pure_normal_descent(
        seed in 0u64..200,
        kappa_f in 0.001..0.5f64,
    ) {
        // With the damping's normal-rate entry exactly zero and the barrier
        // row slack, the minimizer puts the whole resolved-rate error into
        // the normal channel and nothing anywhere else.
        let mut rng = support::rng(0x5afe_0003 ^ seed);
        let n = 6;
        let mut grad_z = DVector::from_fn(n, |_, _| 0.3 * support::standard_normal(&mut rng));
        grad_z[0] = 0.0;
        grad_z[1] = 0.0;
        grad_z[2] = 1.0;
        let grad_b = DVector::from_fn(n, |_, _| support::standard_normal(&mut rng));
        let epsilon = Controller::<f64>::desk_epsilon(n);
        let wide = Bounds {
            lower: vec![Bound::Finite(-1e6); n],
            upper: vec![Bound::Finite(1e6); n],
        };
        let p = qp::assemble(&grad_z, kappa_f, &grad_b, 1e9, wide, &epsilon).unwrap();
        let sol = qp::solve(&p).unwrap();
        prop_assert!(sol.active_set.is_empty());
        for i in 0..n {
            let want = if i == 2 { -kappa_f } else { 0.0 };
            prop_assert!((sol.mu[i] - want).abs() <= 1e-10 * (1.0 + kappa_f));
        }
    }

    // -----------------------------------------------------------------------
    // Controller-level invariants
    // -----------------------------------------------------------------------

    #[test]
    fn feasible_commands_respect_box_and_barrier_row(
        seed in 0u64..250,
        f_measured in -6.0..0.5f64,
    ) {
        let mut rng = support::rng(0x5afe_0004 ^ seed);
        let model = RobotModel::desk(0.0);
        let shaping = Shaping::<f64>::desk_defaults(-3.0, -0.02);
        let limits = LimitConfig::desk_defaults(2);
        let ctrl = Controller::new(
            model,
            shaping.clone(),
            limits,
            Controller::desk_epsilon(6),
        )
        .unwrap();
        let q = support::random_configuration(&mut rng);
        let target = PlanarTarget { x_ref: 0.0, y_ref: 0.0 };
        let out = ctrl.control(&q, f_measured, &target).unwrap();
        if !out.feasible {
            prop_assert!(out.command.amax() == 0.0);
            return Ok(());
        }
        prop_assert!(out.bounds.violation(&out.command) <= 1e-9);
        let lhs = out.barrier.grad_barrier.dot(&out.command);
        let rhs = -shaping.kappa_b.eval(out.barrier.barrier);
        prop_assert!(lhs >= rhs - 1e-9 * (1.0 + rhs.abs()));
        // Normalized dual equals the resolved-rate error when the normal
        // rate is strictly inside its (unbounded) box.
        prop_assert!(
            (out.resolved_rate_error() - out.qp.lambda).abs() <= 1e-8,
            "resolved-rate error {} vs dual {}",
            out.resolved_rate_error(),
            out.qp.lambda
        );
    }

    #[test]
    fn braking_bounds_never_let_joints_exit(seed in 0u64..120) {
        let mut rng = support::rng(0x5afe_0005 ^ seed);
        let limits = LimitConfig::<f64>::desk_defaults(2);
        // Park one joint exactly on a stop: the outward velocity bound
        // collapses to zero while the inward side stays open.
        let j = rng.gen_range(0..2);
        let at_upper = rng.gen_bool(0.5);
        let mut arm = [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)];
        arm[j] = if at_upper {
            limits.arm_pos_upper[j]
        } else {
            limits.arm_pos_lower[j]
        };
        let q = Configuration::new(0.0, 0.0, 0.5, 0.0, &arm);
        let b = limits.velocity_bounds(&q).unwrap();
        let idx = 4 + j;
        if at_upper {
            prop_assert_eq!(b.upper[idx], Bound::Finite(0.0));
            prop_assert!(matches!(b.lower[idx], Bound::Finite(v) if v < 0.0));
        } else {
            prop_assert_eq!(b.lower[idx], Bound::Finite(0.0));
            prop_assert!(matches!(b.upper[idx], Bound::Finite(v) if v > 0.0));
        }
    }
}

// ---------------------------------------------------------------------------
// Deterministic spot checks that anchor the random suites
// ---------------------------------------------------------------------------

#[test]
fn identity_chain_recovers_translation() {
    use nalgebra::{Isometry3, Rotation3, Vector3};
    let model = RobotModel::<f64> {
        plane_position: Vector3::zeros(),
        plane_rotation: Rotation3::identity(),
        phi: 0.0,
        theta: 0.0,
        joints: vec![],
        tool: Isometry3::identity(),
    };
    let q = Configuration::new(1.0, 2.0, 3.0, 0.0, &[]);
    let ee = model.forward_kinematics(&q).unwrap();
    assert_eq!(ee.x(), 1.0);
    assert_eq!(ee.y(), 2.0);
    assert_eq!(ee.z(), 3.0);
}

#[test]
fn prismatic_joint_axis_is_zero_vector() {
    let model = mixed_chain(0.0);
    let q = Configuration::new(0.0, 0.0, 0.5, 0.0, &[0.1, 0.2, -0.1, 0.3]);
    let axis = model.joint_axis(&q, 1).unwrap();
    assert_eq!(axis, nalgebra::Vector3::zeros());
    for j in [0usize, 2, 3] {
        let a = model.joint_axis(&q, j).unwrap();
        assert!((a.norm() - 1.0).abs() <= 1e-12);
    }
}

#[test]
fn reference_qp_solver_matches_closed_form_on_unconstrained_instance() {
    // Sanity-check the oracle itself: with the box wide open and the
    // halfspace slack, projected gradient must land on -H⁻¹f.
    let mut rng = support::rng(42);
    let h = support::random_spd(&mut rng, 5, 0.5, 5.0);
    let f = DVector::from_fn(5, |_, _| support::standard_normal(&mut rng));
    let p = QpProblem {
        h: h.clone(),
        f: f.clone(),
        cbf_row: DVector::zeros(5),
        cbf_rhs: -1.0,
        bounds: Bounds {
            lower: vec![Bound::Finite(-1e9); 5],
            upper: vec![Bound::Finite(1e9); 5],
        },
    };
    let reference = support::reference_qp_solve(&p, 6000);
    let direct = h.clone().lu().solve(&(-&f)).unwrap();
    assert!((reference - direct).amax() <= 1e-9);
}

#[test]
fn spd_generator_spectrum_is_in_range() {
    let mut rng = support::rng(7);
    let h = support::random_spd(&mut rng, 6, 0.5, 5.0);
    let eig = nalgebra::SymmetricEigen::new(h);
    for v in eig.eigenvalues.iter() {
        assert!(*v >= 0.5 - 1e-9 && *v <= 5.0 + 1e-9, "eigenvalue {v}");
    }
}

#[test]
fn mixed_chain_gradients_match_finite_differences() {
    // One deterministic high-dof case; the random suite covers the rest.
    let model = mixed_chain(20.0);
    let q = Configuration::new(0.1, -0.2, 0.7, 0.3, &[0.4, 0.1, -0.5, 0.8]);
    let g = model.grad_task(&q).unwrap();
    let fd_z = support::central_gradient(
        |v: &DVector<f64>| {
            let qv = Configuration::from_vector(v.clone()).unwrap();
            model.forward_kinematics(&qv).unwrap().z()
        },
        q.vector(),
        1e-6,
    );
    assert!((&g.grad_z - &fd_z).amax() <= 1e-6);
    let fd_ro = support::central_gradient(
        |v: &DVector<f64>| {
            let qv = Configuration::from_vector(v.clone()).unwrap();
            1.0 + model.forward_kinematics(&qv).unwrap().z_axis()[2]
        },
        q.vector(),
        1e-6,
    );
    assert!((&g.grad_r_o - &fd_ro).amax() <= 1e-6);
}

#[test]
fn dual_scaling_matches_between_conventions() {
    // Doubling the objective (H, f) leaves the minimizer and scales every
    // dual by two; the controller relies on exactly this when normalizing.
    let mut rng = support::rng(99);
    let p = support::random_feasible_instance(&mut rng, 6);
    let doubled = QpProblem {
        h: DMatrix::from(&p.h * 2.0),
        f: &p.f * 2.0,
        cbf_row: p.cbf_row.clone(),
        cbf_rhs: p.cbf_rhs,
        bounds: p.bounds.clone(),
    };
    let a = qp::solve(&p).unwrap();
    let b = qp::solve(&doubled).unwrap();
    assert!((&a.mu - &b.mu).amax() <= 1e-8);
    assert!((a.lambda * 2.0 - b.lambda).abs() <= 1e-8);
}
