//! Per-step QP dump.
//!
//! For every logged row the controller is re-invoked on the logged state
//! (configuration, measured force, planar reference), and the full
//! quadratic-program picture is written out: objective slope, barrier row,
//! velocity box, solution, duals, and the final working set. Because the
//! controller is deterministic, the dump reproduces exactly what the
//! simulator computed at that step.

use std::fmt::Write;

use safepress::kinematics::Configuration;
use safepress::limits::Bound;
use safepress::qp::{ActiveConstraint, QpStatus};
use safepress::simulator::{Scenario, Trajectory};
use safepress::task::PlanarTarget;
use safepress::Result;

/// Builds the dump CSV for a finished run.
pub fn qp_dump_csv(traj: &Trajectory<f64>, sc: &Scenario<f64>) -> Result<String> {
    let ctrl = sc.controller()?;
    let n = traj.meta.dof;

    let mut out = String::with_capacity(256 * traj.rows.len());
    out.push_str("t,status,feasible,iterations,active_set,kappa_f,barrier,kappa_b,lambda,kkt");
    for block in ["u", "mu", "grad_b", "lower", "upper"] {
        for i in 0..n {
            let _ = write!(out, ",{block}_{i}");
        }
    }
    out.push('\n');

    for row in &traj.rows {
        let q = Configuration::from_vector(nalgebra::DVector::from_vec(row.q.clone()))?;
        let target = PlanarTarget {
            x_ref: row.x_ref,
            y_ref: row.y_ref,
        };
        let o = ctrl.control(&q, row.force, &target)?;

        let status = match o.qp.status {
            QpStatus::Feasible => "feasible",
            QpStatus::Infeasible => "infeasible",
        };
        let _ = write!(
            out,
            "{:.9e},{status},{},{},{},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e}",
            row.t,
            o.feasible,
            o.qp.iterations,
            active_set_label(&o.qp.active_set),
            o.kappa_f,
            o.barrier.barrier,
            sc.shaping.kappa_b.eval(o.barrier.barrier),
            o.qp.lambda,
            o.qp.kkt_residual,
        );
        for i in 0..n {
            let _ = write!(out, ",{:.9e}", o.command[i]);
        }
        for i in 0..n {
            let _ = write!(out, ",{:.9e}", o.qp.mu[i]);
        }
        for i in 0..n {
            let _ = write!(out, ",{:.9e}", o.barrier.grad_barrier[i]);
        }
        for bound in o.bounds.lower.iter().chain(o.bounds.upper.iter()) {
            match bound {
                Bound::Finite(v) => {
                    let _ = write!(out, ",{v:.9e}");
                }
                Bound::Unbounded => out.push_str(",inf"),
            }
        }
        out.push('\n');
    }
    Ok(out)
}

/// `C` for the barrier row, `L<i>`/`U<i>` for bound faces, `-` when empty;
/// matches the simulator's trajectory-log convention.
fn active_set_label(set: &[ActiveConstraint]) -> String {
    if set.is_empty() {
        return "-".to_string();
    }
    let parts: Vec<String> = set
        .iter()
        .map(|c| match c {
            ActiveConstraint::Cbf => "C".to_string(),
            ActiveConstraint::Lower(i) => format!("L{i}"),
            ActiveConstraint::Upper(i) => format!("U{i}"),
        })
        .collect();
    parts.join("|")
}
