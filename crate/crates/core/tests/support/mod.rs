//! Shared oracles for the integration suites.
//!
//! Everything here is deliberately implemented *independently* of the library
//! under test: forward kinematics through plain 4x4 array products, gradient
//! checks through central differences, box-LP feasibility through vertex
//! enumeration, and a first-order projected-gradient QP solver. Agreement
//! between these and the library is evidence, not tautology.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use safepress::kinematics::{Configuration, JointKind, RobotModel};
use safepress::limits::{Bound, Bounds};
use safepress::qp::QpProblem;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------------------
// Plain-array forward-kinematics oracle
// ---------------------------------------------------------------------------

pub type Mat3 = [[f64; 3]; 3];
pub type Mat4 = [[f64; 4]; 4];

pub fn mat4_identity() -> Mat4 {
    let mut m = [[0.0; 4]; 4];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

pub fn mat4_mul(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut out = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            let mut acc = 0.0;
            for (k, bk) in b.iter().enumerate() {
                acc += a[i][k] * bk[j];
            }
            out[i][j] = acc;
        }
    }
    out
}

pub fn mat4_from_parts(r: &Mat3, t: [f64; 3]) -> Mat4 {
    let mut m = mat4_identity();
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = r[i][j];
        }
        m[i][3] = t[i];
    }
    m
}

pub fn mat3_transpose(r: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for (j, rj) in r.iter().enumerate() {
            out[i][j] = rj[i];
        }
    }
    out
}

pub fn mat3_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let mut acc = 0.0;
            for (k, bk) in b.iter().enumerate() {
                acc += a[i][k] * bk[j];
            }
            out[i][j] = acc;
        }
    }
    out
}

/// Rodrigues rotation about a unit axis.
pub fn rot_axis_angle(axis: [f64; 3], angle: f64) -> Mat3 {
    let (s, c) = angle.sin_cos();
    let [x, y, z] = axis;
    let v = 1.0 - c;
    [
        [c + x * x * v, x * y * v - z * s, x * z * v + y * s],
        [y * x * v + z * s, c + y * y * v, y * z * v - x * s],
        [z * x * v - y * s, z * y * v + x * s, c + z * z * v],
    ]
}

fn iso_to_mat4(iso: &nalgebra::Isometry3<f64>) -> Mat4 {
    let r = iso.rotation.to_rotation_matrix();
    let mut rr = [[0.0; 3]; 3];
    for (i, row) in rr.iter_mut().enumerate() {
        for (j, val) in row.iter_mut().enumerate() {
            *val = r.matrix()[(i, j)];
        }
    }
    let t = iso.translation.vector;
    mat4_from_parts(&rr, [t[0], t[1], t[2]])
}

/// End-effector pose computed by composing plain homogeneous matrices.
///
/// The model's numeric data (plane rotation, joint offsets, axes, tool
/// transform) is copied out once; all composition — the vehicle pose with its
/// yaw/pitch/roll stack and plane-frame change, each joint's offset and
/// motion, the tool transform — is redone here with local array arithmetic.
pub fn oracle_forward_kinematics(model: &RobotModel<f64>, q: &Configuration<f64>) -> Mat4 {
    let mut plane = [[0.0; 3]; 3];
    for (i, row) in plane.iter_mut().enumerate() {
        for (j, val) in row.iter_mut().enumerate() {
            *val = model.plane_rotation.matrix()[(i, j)];
        }
    }
    let attitude_world = mat3_mul(
        &rot_axis_angle([0.0, 0.0, 1.0], q.psi()),
        &mat3_mul(
            &rot_axis_angle([0.0, 1.0, 0.0], model.theta),
            &rot_axis_angle([1.0, 0.0, 0.0], model.phi),
        ),
    );
    let vehicle_rot = mat3_mul(&mat3_transpose(&plane), &attitude_world);
    let mut t = mat4_from_parts(&vehicle_rot, [q.x(), q.y(), q.z()]);

    for (joint, &qj) in model.joints.iter().zip(q.arm()) {
        t = mat4_mul(&t, &iso_to_mat4(&joint.origin));
        let axis = [joint.axis[0], joint.axis[1], joint.axis[2]];
        let motion = match joint.kind {
            JointKind::Revolute => mat4_from_parts(&rot_axis_angle(axis, qj), [0.0; 3]),
            JointKind::Prismatic => {
                mat4_from_parts(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], [
                    axis[0] * qj,
                    axis[1] * qj,
                    axis[2] * qj,
                ])
            }
        };
        t = mat4_mul(&t, &motion);
    }
    mat4_mul(&t, &iso_to_mat4(&model.tool))
}

// ---------------------------------------------------------------------------
// Finite differences
// ---------------------------------------------------------------------------

/// Central-difference gradient of a scalar field over the configuration
/// vector.
pub fn central_gradient(
    f: impl Fn(&DVector<f64>) -> f64,
    q: &DVector<f64>,
    h: f64,
) -> DVector<f64> {
    let n = q.len();
    let mut g = DVector::zeros(n);
    for i in 0..n {
        let mut plus = q.clone();
        let mut minus = q.clone();
        plus[i] += h;
        minus[i] -= h;
        g[i] = (f(&plus) - f(&minus)) / (2.0 * h);
    }
    g
}

// ---------------------------------------------------------------------------
// Box-LP oracle
// ---------------------------------------------------------------------------

/// Supremum of `gᵀmu` over the box; `None` means the supremum is infinite.
///
/// For an all-finite box this enumerates all 2ⁿ vertices — a genuinely
/// different algorithm from the componentwise selection rule used by the
/// library. Unbounded coordinates short-circuit: any nonzero gradient entry
/// on an unbounded side makes the supremum infinite.
pub fn box_sup(g: &DVector<f64>, bounds: &Bounds<f64>) -> Option<f64> {
    let n = g.len();
    let mut lo = vec![0.0; n];
    let mut hi = vec![0.0; n];
    for i in 0..n {
        match (bounds.lower[i], bounds.upper[i]) {
            (Bound::Finite(l), Bound::Finite(u)) => {
                lo[i] = l;
                hi[i] = u;
            }
            (lower, upper) => {
                if g[i] > 0.0 && upper == Bound::Unbounded {
                    return None;
                }
                if g[i] < 0.0 && lower == Bound::Unbounded {
                    return None;
                }
                // The unbounded side is never selected by a maximizer for
                // this gradient sign; pin the coordinate to whichever finite
                // side exists (or zero if both are unbounded and g[i] = 0).
                let v = match (lower, upper) {
                    (Bound::Finite(l), _) if g[i] <= 0.0 => l,
                    (_, Bound::Finite(u)) if g[i] >= 0.0 => u,
                    (Bound::Finite(l), _) => l,
                    (_, Bound::Finite(u)) => u,
                    _ => 0.0,
                };
                lo[i] = v;
                hi[i] = v;
            }
        }
    }
    assert!(n <= 20, "vertex enumeration oracle limited to small n");
    let mut best = f64::NEG_INFINITY;
    for mask in 0..(1usize << n) {
        let mut acc = 0.0;
        for i in 0..n {
            let v = if mask & (1 << i) != 0 { hi[i] } else { lo[i] };
            acc += g[i] * v;
        }
        best = best.max(acc);
    }
    Some(best)
}

// ---------------------------------------------------------------------------
// Projected-gradient reference QP solver
// ---------------------------------------------------------------------------

fn clamp_to_box(v: &DVector<f64>, bounds: &Bounds<f64>) -> DVector<f64> {
    let mut out = v.clone();
    for i in 0..v.len() {
        if let Bound::Finite(l) = bounds.lower[i] {
            out[i] = out[i].max(l);
        }
        if let Bound::Finite(u) = bounds.upper[i] {
            out[i] = out[i].min(u);
        }
    }
    out
}

/// Euclidean projection onto `box ∩ {gᵀmu ≥ c}`.
///
/// If the box clamp already satisfies the halfspace it is the projection.
/// Otherwise the projection is `clamp(v + lambda·g)` for the unique
/// `lambda ≥ 0` making the halfspace active; `gᵀclamp(v + lambda·g)` is
/// nondecreasing in `lambda`, so bisection finds it.
fn project(v: &DVector<f64>, g: &DVector<f64>, c: f64, bounds: &Bounds<f64>) -> DVector<f64> {
    let clamped = clamp_to_box(v, bounds);
    if g.dot(&clamped) >= c {
        return clamped;
    }
    let phi = |lambda: f64| g.dot(&clamp_to_box(&(v + g * lambda), bounds)) - c;
    let mut hi = 1.0;
    let mut grow = 0;
    while phi(hi) < 0.0 {
        hi *= 2.0;
        grow += 1;
        assert!(grow < 200, "projection target unreachable: infeasible instance");
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if phi(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    clamp_to_box(&(v + g * hi), bounds)
}

fn spectral_norm(h: &DMatrix<f64>) -> f64 {
    let n = h.nrows();
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut norm = 0.0;
    for _ in 0..200 {
        let w = h * &v;
        norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        v = w / norm;
    }
    norm
}

/// Solves `min ½ muᵀH mu + fᵀmu` over `box ∩ {gᵀmu ≥ c}` by projected
/// gradient descent with a `1/L` step. Strong convexity makes the iteration a
/// contraction, so enough iterations pin the unique minimizer to tight
/// tolerance without sharing any code with the active-set solver under test.
pub fn reference_qp_solve(p: &QpProblem<f64>, iters: usize) -> DVector<f64> {
    let l = spectral_norm(&p.h).max(1e-12);
    let step = 1.0 / l;
    let mut mu = project(&DVector::zeros(p.dim()), &p.cbf_row, p.cbf_rhs, &p.bounds);
    for _ in 0..iters {
        let grad = &p.h * &mu + &p.f;
        mu = project(&(&mu - grad * step), &p.cbf_row, p.cbf_rhs, &p.bounds);
    }
    mu
}

// ---------------------------------------------------------------------------
// Random instances
// ---------------------------------------------------------------------------

/// Random symmetric positive-definite matrix with eigenvalues in
/// `[eig_lo, eig_hi]` (random orthogonal basis from a QR factorization).
pub fn random_spd(rng: &mut ChaCha8Rng, n: usize, eig_lo: f64, eig_hi: f64) -> DMatrix<f64> {
    let gauss = DMatrix::from_fn(n, n, |_, _| standard_normal(rng));
    let qr = gauss.qr();
    let qmat = qr.q();
    let eigs = DVector::from_fn(n, |_, _| rng.gen_range(eig_lo..eig_hi));
    let mut out = DMatrix::zeros(n, n);
    for k in 0..n {
        let col = qmat.column(k);
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] += eigs[k] * col[i] * col[j];
            }
        }
    }
    // Symmetrize against roundoff so Cholesky sees an exactly symmetric matrix.
    let transposed = out.transpose();
    (out + transposed) * 0.5
}

pub fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box–Muller; adequate quality for test-instance generation.
    let u1: f64 = rng.gen_range(1e-12..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Random velocity box mixing finite and unbounded sides.
pub fn random_bounds(rng: &mut ChaCha8Rng, n: usize, allow_unbounded: bool) -> Bounds<f64> {
    let mut lower = Vec::with_capacity(n);
    let mut upper = Vec::with_capacity(n);
    for _ in 0..n {
        let lo = if allow_unbounded && rng.gen_bool(0.15) {
            Bound::Unbounded
        } else {
            Bound::Finite(-rng.gen_range(0.05..2.0))
        };
        let hi = if allow_unbounded && rng.gen_bool(0.15) {
            Bound::Unbounded
        } else {
            Bound::Finite(rng.gen_range(0.05..2.0))
        };
        lower.push(lo);
        upper.push(hi);
    }
    Bounds { lower, upper }
}

/// Random strictly feasible QP instance for the solver-equivalence suite.
pub fn random_feasible_instance(rng: &mut ChaCha8Rng, n: usize) -> QpProblem<f64> {
    let h = random_spd(rng, n, 0.5, 5.0);
    let f = DVector::from_fn(n, |_, _| 3.0 * standard_normal(rng));
    let g = DVector::from_fn(n, |_, _| standard_normal(rng));
    let bounds = random_bounds(rng, n, true);
    let rhs = match box_sup(&g, &bounds) {
        None => standard_normal(rng) * 2.0,
        Some(sup) => sup - rng.gen_range(0.05..2.0),
    };
    QpProblem {
        h,
        f,
        cbf_row: g,
        cbf_rhs: rhs,
        bounds,
    }
}

/// Random configuration with joints strictly inside the desk stops and the
/// base in a desk-scale envelope.
pub fn random_configuration(rng: &mut ChaCha8Rng) -> Configuration<f64> {
    let x = rng.gen_range(-0.5..0.5);
    let y = rng.gen_range(-0.5..0.5);
    let z = rng.gen_range(-0.1..1.5);
    let psi = rng.gen_range(-0.6..0.6);
    let arm = [
        rng.gen_range(-1.2..1.2),
        rng.gen_range(-1.8..1.8),
    ];
    Configuration::new(x, y, z, psi, &arm)
}
