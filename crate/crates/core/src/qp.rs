//! Dense convex QP with box bounds and one general inequality.
//!
//! The controller's per-step problem is
//!
//! ```text
//! min_mu  ½·muᵀH·mu + fᵀmu
//! s.t.    gᵀmu ≥ c            (barrier row)
//!         lower ≤ mu ≤ upper  (velocity box, entries may be unbounded)
//! ```
//!
//! with `H` symmetric positive definite. The solver is a primal active-set
//! method specialized to this structure: the working set is a subset of box
//! faces plus optionally the barrier row, each equality-constrained
//! subproblem is solved by a fresh Cholesky factorization of the free-free
//! Hessian block (problems here have at most a dozen variables, so
//! refactorization is cheaper than bookkeeping), and exact multipliers fall
//! out of the stationarity conditions. Everything is deterministic: no
//! randomization, fixed tie-breaking, bit-identical reruns.
//!
//! Feasibility is decided constructively before optimizing: starting from the
//! box-clamped origin, the phase-1 routine pushes coordinates toward their
//! barrier-favorable bounds until the barrier row is satisfied or every
//! coordinate is exhausted; the leftover deficit is the (negated) feasibility
//! margin certificate.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::limits::{Bound, Bounds};
use crate::scalar::{real, Real};

/// Problem data. For controller-assembled problems (see [`assemble`]),
/// `h = 2·∇r_Z∇r_Zᵀ + 2·diag(epsilon)` and `f = 2·kappa_f·∇r_Z`, so the
/// objective equals the squared resolved-rate error plus the damping term, up
/// to the constant `kappa_f²`.
#[derive(Clone, Debug)]
pub struct QpProblem<T: Real> {
    pub h: DMatrix<T>,
    pub f: DVector<T>,
    /// Barrier row `g` (constraint `gᵀmu ≥ cbf_rhs`).
    pub cbf_row: DVector<T>,
    pub cbf_rhs: T,
    pub bounds: Bounds<T>,
}

impl<T: Real> QpProblem<T> {
    pub fn dim(&self) -> usize {
        self.f.len()
    }

    /// Objective `½·muᵀH·mu + fᵀmu`.
    pub fn objective(&self, mu: &DVector<T>) -> T {
        (mu.dot(&(&self.h * mu))) * real::<T>(0.5) + self.f.dot(mu)
    }
}

/// Solver verdict.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QpStatus {
    Feasible,
    Infeasible,
}

/// One member of the final working set.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActiveConstraint {
    /// The barrier row held with equality.
    Cbf,
    /// Variable `i` held at its lower bound.
    Lower(usize),
    /// Variable `i` held at its upper bound.
    Upper(usize),
}

/// Solution with exact multipliers.
///
/// Straight out of [`solve`], the duals certify the system
/// `H·mu + f - lambda·g - lambda_lower + lambda_upper = 0`; the controller
/// rescales them to the resolved-rate convention (see the controller module).
/// `kkt_residual` is the largest residual over the four optimality blocks in
/// the convention of whichever routine produced the value.
#[derive(Clone, Debug)]
pub struct QpSolution<T: Real> {
    pub mu: DVector<T>,
    /// Barrier-row dual (`≥ 0`).
    pub lambda: T,
    /// Lower-bound duals (`≥ 0`, zero where inactive).
    pub lambda_lower: DVector<T>,
    /// Upper-bound duals (`≥ 0`, zero where inactive).
    pub lambda_upper: DVector<T>,
    pub status: QpStatus,
    pub kkt_residual: T,
    /// Final working set, barrier row first, then bound faces by index.
    pub active_set: Vec<ActiveConstraint>,
    /// Active-set iterations performed.
    pub iterations: usize,
    /// For infeasible problems: the (negative) best achievable slack
    /// `max_box gᵀmu - c`; `None` when feasible.
    pub infeasibility: Option<T>,
}

/// Residuals of the four KKT blocks for given primal/dual candidates, in the
/// `½·muᵀH·mu + fᵀmu` convention.
#[derive(Clone, Copy, Debug)]
pub struct KktResiduals<T> {
    pub stationarity: T,
    pub primal: T,
    pub dual: T,
    pub complementarity: T,
}

impl<T: Real> KktResiduals<T> {
    pub fn max(&self) -> T {
        self.stationarity
            .max(self.primal)
            .max(self.dual)
            .max(self.complementarity)
    }
}

/// Evaluates the KKT residuals of a candidate solution against the problem.
pub fn kkt_residuals<T: Real>(p: &QpProblem<T>, s: &QpSolution<T>) -> KktResiduals<T> {
    let n = p.dim();
    let grad = &p.h * &s.mu + &p.f - &p.cbf_row * s.lambda - &s.lambda_lower + &s.lambda_upper;
    let stationarity = grad.amax();

    let slack = p.cbf_row.dot(&s.mu) - p.cbf_rhs;
    let mut primal = (-slack).max(T::zero());
    primal = primal.max(p.bounds.violation(&s.mu));

    let mut dual = (-s.lambda).max(T::zero());
    let mut complementarity = (s.lambda * slack).abs();
    for i in 0..n {
        let pinned = match (p.bounds.lower[i], p.bounds.upper[i]) {
            (Bound::Finite(lo), Bound::Finite(hi)) => lo == hi,
            _ => false,
        };
        if !pinned {
            dual = dual.max(-s.lambda_lower[i]).max(-s.lambda_upper[i]);
        }
        if let Bound::Finite(lo) = p.bounds.lower[i] {
            complementarity = complementarity.max((s.lambda_lower[i] * (s.mu[i] - lo)).abs());
        }
        if let Bound::Finite(hi) = p.bounds.upper[i] {
            complementarity = complementarity.max((s.lambda_upper[i] * (hi - s.mu[i])).abs());
        }
    }
    KktResiduals {
        stationarity,
        primal,
        dual,
        complementarity,
    }
}

/// Builds the controller QP from the barrier/task quantities.
///
/// `epsilon` is the damping diagonal; its third entry (the `ż` slot) must be
/// exactly zero so that the normal rate carries the resolved-rate error
/// unpenalized, and all entries must be nonnegative. Positive-definiteness of
/// the resulting Hessian is asserted via a Cholesky pivot floor.
pub fn assemble<T: Real>(
    grad_z: &DVector<T>,
    kappa_f: T,
    grad_b: &DVector<T>,
    kappa_b_of_b: T,
    bounds: Bounds<T>,
    epsilon: &DVector<T>,
) -> Result<QpProblem<T>> {
    let n = grad_z.len();
    if grad_b.len() != n || epsilon.len() != n || bounds.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: grad_b.len().max(epsilon.len()).max(bounds.dim()),
            context: "assemble: gradient/epsilon/bounds dimensions",
        });
    }
    if n < 3 {
        return Err(Error::DimensionMismatch {
            expected: 3,
            got: n,
            context: "assemble: need at least the vehicle translation entries",
        });
    }
    if epsilon.iter().any(|&e| e < T::zero()) {
        return Err(Error::Precondition("epsilon entries must be nonnegative".into()));
    }
    if epsilon[2] != T::zero() {
        return Err(Error::Precondition(
            "the ż damping entry epsilon[2] must be exactly zero".into(),
        ));
    }

    let two = real::<T>(2.0);
    let mut h = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            h[(i, j)] = two * grad_z[i] * grad_z[j];
        }
        h[(i, i)] += two * epsilon[i];
    }
    let f = grad_z * (two * kappa_f);

    let floor = real::<T>(1e-14);
    let pivot = match Cholesky::new(h.clone()) {
        Some(chol) => {
            let dmin = chol.l().diagonal().iter().fold(T::max_value().unwrap(), |a, &v| a.min(v));
            dmin * dmin
        }
        None => T::zero(),
    };
    if !(pivot > floor) {
        return Err(Error::NotPositiveDefinite {
            pivot: pivot.to_f64().unwrap_or(0.0),
            floor: 1e-14,
        });
    }

    Ok(QpProblem {
        h,
        f,
        cbf_row: grad_b.clone(),
        cbf_rhs: -kappa_b_of_b,
        bounds,
    })
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum VarState {
    Free,
    AtLower,
    AtUpper,
}

/// Solves from the box-clamped origin. See [`solve_warm`].
pub fn solve<T: Real>(p: &QpProblem<T>) -> Result<QpSolution<T>> {
    let zero = DVector::zeros(p.dim());
    solve_warm(p, &zero)
}

/// Solves the QP starting from `start` (clamped into the box and repaired to
/// barrier feasibility).
///
/// The primal solution of a strictly convex QP is unique, so any warm start
/// reaches the same `mu` (up to roundoff); warm starts only change the path.
pub fn solve_warm<T: Real>(p: &QpProblem<T>, start: &DVector<T>) -> Result<QpSolution<T>> {
    let n = p.dim();
    assert_eq!(start.len(), n, "warm start dimension");
    let g = &p.cbf_row;
    let c = p.cbf_rhs;

    // ---- Phase 1: construct a feasible point or prove infeasibility. ----
    let mut mu = p.bounds.clamp(start);
    let mut state: Vec<VarState> = (0..n)
        .map(|i| {
            if p.bounds.lower[i].finite() == Some(mu[i]) {
                VarState::AtLower
            } else if p.bounds.upper[i].finite() == Some(mu[i]) {
                VarState::AtUpper
            } else {
                VarState::Free
            }
        })
        .collect();
    let mut cbf_active = false;

    let slack0 = g.dot(&mu) - c;
    if slack0 < T::zero() {
        let mut deficit = -slack0;
        for i in 0..n {
            if deficit <= T::zero() {
                break;
            }
            let gi = g[i];
            if gi == T::zero() {
                continue;
            }
            let target_bound = if gi > T::zero() {
                p.bounds.upper[i]
            } else {
                p.bounds.lower[i]
            };
            match target_bound {
                Bound::Unbounded => {
                    // Cover the whole remaining deficit with this coordinate.
                    mu[i] += deficit / gi;
                    state[i] = VarState::Free;
                    deficit = T::zero();
                }
                Bound::Finite(b) => {
                    let gain = gi * (b - mu[i]);
                    if gain >= deficit {
                        mu[i] += deficit / gi;
                        state[i] = VarState::Free;
                        deficit = T::zero();
                    } else {
                        mu[i] = b;
                        state[i] = if gi > T::zero() {
                            VarState::AtUpper
                        } else {
                            VarState::AtLower
                        };
                        deficit -= gain;
                    }
                }
            }
        }
        if deficit > T::zero() {
            // Every coordinate sits at its favorable bound: mu is the box
            // maximizer of gᵀmu and the constraint still fails.
            return Ok(QpSolution {
                mu: DVector::zeros(n),
                lambda: T::zero(),
                lambda_lower: DVector::zeros(n),
                lambda_upper: DVector::zeros(n),
                status: QpStatus::Infeasible,
                kkt_residual: T::zero(),
                active_set: Vec::new(),
                iterations: 0,
                infeasibility: Some(-deficit),
            });
        }
        // The repair landed exactly on the constraint surface.
        cbf_active = true;
    }

    // Entries pinned by a degenerate box (lower == upper) are never released.
    let pinned: Vec<bool> = (0..n)
        .map(|i| match (p.bounds.lower[i], p.bounds.upper[i]) {
            (Bound::Finite(lo), Bound::Finite(hi)) => lo == hi,
            _ => false,
        })
        .collect();

    let scale = T::one()
        + p.f.amax()
        + p.h.amax()
        + c.abs()
        + g.amax();
    let tol_dual = real::<T>(1e-11) * scale;
    let tol_step = real::<T>(1e-13);

    let cap = 100 + 20 * (n + 1);
    let mut iterations = 0;

    loop {
        iterations += 1;
        if iterations > cap {
            return Err(Error::SolverIterationLimit { cap });
        }

        // ---- Equality subproblem on the working set. ----
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == VarState::Free).collect();
        let nf = free.len();

        let mut target = mu.clone();
        let mut lambda_cbf = T::zero();

        if nf > 0 {
            let mut hff = DMatrix::zeros(nf, nf);
            for (a, &i) in free.iter().enumerate() {
                for (b, &j) in free.iter().enumerate() {
                    hff[(a, b)] = p.h[(i, j)];
                }
            }
            let mut rhs = DVector::zeros(nf);
            for (a, &i) in free.iter().enumerate() {
                let mut acc = -p.f[i];
                for j in 0..n {
                    if state[j] != VarState::Free {
                        acc -= p.h[(i, j)] * mu[j];
                    }
                }
                rhs[a] = acc;
            }
            let chol = Cholesky::new(hff).ok_or(Error::NotPositiveDefinite {
                pivot: 0.0,
                floor: 0.0,
            })?;
            let base = chol.solve(&rhs);

            let gf = DVector::from_iterator(nf, free.iter().map(|&i| g[i]));
            if cbf_active && gf.amax() > T::zero() {
                let dir = chol.solve(&gf);
                let denom = gf.dot(&dir);
                let mut fixed_part = T::zero();
                for j in 0..n {
                    if state[j] != VarState::Free {
                        fixed_part += g[j] * mu[j];
                    }
                }
                let nu = (c - fixed_part - gf.dot(&base)) / denom;
                for (a, &i) in free.iter().enumerate() {
                    target[i] = base[a] + dir[a] * nu;
                }
                lambda_cbf = nu;
            } else {
                if cbf_active {
                    // Barrier row involves no free variable: treat it as
                    // droppable immediately.
                    cbf_active = false;
                }
                for (a, &i) in free.iter().enumerate() {
                    target[i] = base[a];
                }
            }
        } else if cbf_active {
            // All variables fixed: the barrier equality cannot be steered.
            cbf_active = false;
        }

        let step: DVector<T> = &target - &mu;
        let step_size = step.amax();

        if step_size <= tol_step {
            // ---- Candidate optimum: check multipliers. ----
            let grad = &p.h * &mu + &p.f;
            let mut worst = T::zero();
            let mut drop: Option<ActiveConstraint> = None;
            if cbf_active && lambda_cbf < worst - tol_dual {
                worst = lambda_cbf;
                drop = Some(ActiveConstraint::Cbf);
            }
            let mut lambda_lower = DVector::zeros(n);
            let mut lambda_upper = DVector::zeros(n);
            for i in 0..n {
                let gi = grad[i] - g[i] * lambda_cbf;
                match state[i] {
                    VarState::AtLower => {
                        lambda_lower[i] = gi;
                        if !pinned[i] && gi < worst - tol_dual {
                            worst = gi;
                            drop = Some(ActiveConstraint::Lower(i));
                        }
                    }
                    VarState::AtUpper => {
                        lambda_upper[i] = -gi;
                        if !pinned[i] && -gi < worst - tol_dual {
                            worst = -gi;
                            drop = Some(ActiveConstraint::Upper(i));
                        }
                    }
                    VarState::Free => {}
                }
            }

            match drop {
                Some(ActiveConstraint::Cbf) => {
                    cbf_active = false;
                    continue;
                }
                Some(ActiveConstraint::Lower(i)) | Some(ActiveConstraint::Upper(i)) => {
                    state[i] = VarState::Free;
                    continue;
                }
                None => {
                    // Optimal. Multipliers within tol_dual of zero are
                    // clipped to exactly zero; the reported residual is that
                    // of the clipped record.
                    let mut active_set = Vec::new();
                    if cbf_active {
                        active_set.push(ActiveConstraint::Cbf);
                    }
                    for i in 0..n {
                        match state[i] {
                            VarState::AtLower => active_set.push(ActiveConstraint::Lower(i)),
                            VarState::AtUpper => active_set.push(ActiveConstraint::Upper(i)),
                            VarState::Free => {}
                        }
                    }
                    let lambda = if cbf_active {
                        lambda_cbf.max(T::zero())
                    } else {
                        T::zero()
                    };
                    let mut sol = QpSolution {
                        mu,
                        lambda,
                        lambda_lower: lambda_lower.map(|v| v.max(T::zero())),
                        lambda_upper: lambda_upper.map(|v| v.max(T::zero())),
                        status: QpStatus::Feasible,
                        kkt_residual: T::zero(),
                        active_set,
                        iterations,
                        infeasibility: None,
                    };
                    sol.kkt_residual = kkt_residuals(p, &sol).max();
                    return Ok(sol);
                }
            }
        }

        // ---- Line step towards the subproblem solution. ----
        let mut alpha = T::one();
        let mut blocker: Option<ActiveConstraint> = None;
        for i in 0..n {
            if state[i] != VarState::Free {
                continue;
            }
            if step[i] > T::zero() {
                if let Bound::Finite(hi) = p.bounds.upper[i] {
                    let a = (hi - mu[i]) / step[i];
                    if a < alpha {
                        alpha = a.max(T::zero());
                        blocker = Some(ActiveConstraint::Upper(i));
                    }
                }
            } else if step[i] < T::zero() {
                if let Bound::Finite(lo) = p.bounds.lower[i] {
                    let a = (lo - mu[i]) / step[i];
                    if a < alpha {
                        alpha = a.max(T::zero());
                        blocker = Some(ActiveConstraint::Lower(i));
                    }
                }
            }
        }
        if !cbf_active {
            let s = g.dot(&step);
            if s < T::zero() {
                let a = (c - g.dot(&mu)) / s;
                if a < alpha {
                    alpha = a.max(T::zero());
                    blocker = Some(ActiveConstraint::Cbf);
                }
            }
        }

        mu.axpy(alpha, &step, T::one());
        match blocker {
            Some(ActiveConstraint::Cbf) => {
                cbf_active = true;
            }
            Some(ActiveConstraint::Lower(i)) => {
                if let Bound::Finite(lo) = p.bounds.lower[i] {
                    mu[i] = lo;
                }
                state[i] = VarState::AtLower;
            }
            Some(ActiveConstraint::Upper(i)) => {
                if let Bound::Finite(hi) = p.bounds.upper[i] {
                    mu[i] = hi;
                }
                state[i] = VarState::AtUpper;
            }
            None => {
                // Full step taken; the next pass checks optimality.
                mu = target;
            }
        }
    }
}
