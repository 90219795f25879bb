//! Reaction-force models: simulation ground truth for the contact.
//!
//! A force model maps the normal coordinate `Z` to the scalar normal force
//! `F` the surface exerts on the tool, with the contact convention
//!
//! ```text
//! F(Z) = 0          for Z ≥ 0   (no contact)
//! F(Z) ≤ 0, nondecreasing in Z  (pressing deeper pulls F further negative)
//! ```
//!
//! The controller never sees these models — its only environmental input is
//! the measured scalar `F`. The simulator evaluates them per integration
//! stage, and the analysis layer inverts them to recover the insertion depth
//! `Z_d` at which `F(Z_d) = F_d` (a diagnostic quantity: the controller runs
//! on the conservative estimate `Z_d*` instead).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{real, Real};

/// Supported force-model families.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ForceModel<T: Real> {
    /// `F(Z) = min(k·Z, 0)`.
    Spring { stiffness: T },
    /// Spring clamped at a saturation force: `F(Z) = max(min(k·Z, 0), f_sat)`
    /// with `f_sat < 0`. Forces below `f_sat` are unreachable.
    SaturatingSpring { stiffness: T, f_sat: T },
    /// Piecewise-linear interpolation of `(z, f)` samples, constant beyond
    /// the end points. Samples must be strictly increasing in `z`,
    /// nondecreasing in `f`, with `f ≤ 0` everywhere and `f = 0` at the
    /// last sample.
    Table { points: Vec<(T, T)> },
}

impl<T: Real> ForceModel<T> {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::InvalidForceModel(msg.to_string()));
        match self {
            ForceModel::Spring { stiffness } => {
                if !(*stiffness > T::zero()) || !stiffness.is_finite() {
                    return fail("spring stiffness must be positive and finite");
                }
            }
            ForceModel::SaturatingSpring { stiffness, f_sat } => {
                if !(*stiffness > T::zero()) || !stiffness.is_finite() {
                    return fail("spring stiffness must be positive and finite");
                }
                if !(*f_sat < T::zero()) || !f_sat.is_finite() {
                    return fail("saturation force must be negative and finite");
                }
            }
            ForceModel::Table { points } => {
                if points.len() < 2 {
                    return fail("force table needs at least two samples");
                }
                for window in points.windows(2) {
                    let (z0, f0) = window[0];
                    let (z1, f1) = window[1];
                    if !(z1 > z0) || !(f1 >= f0) {
                        return fail(
                            "force table must be strictly increasing in z and nondecreasing in f",
                        );
                    }
                }
                if points.iter().any(|&(z, f)| !z.is_finite() || !f.is_finite() || f > T::zero())
                {
                    return fail("force table values must be finite with f ≤ 0");
                }
                if points.last().map(|&(_, f)| f) != Some(T::zero()) {
                    return fail("force table must end at f = 0 (contact boundary)");
                }
            }
        }
        Ok(())
    }

    /// Normal force at insertion `z`. Exactly zero out of contact.
    pub fn reaction_force(&self, z: T) -> T {
        match self {
            ForceModel::Spring { stiffness } => (*stiffness * z).min(T::zero()),
            ForceModel::SaturatingSpring { stiffness, f_sat } => {
                (*stiffness * z).min(T::zero()).max(*f_sat)
            }
            ForceModel::Table { points } => {
                let first = points[0];
                let last = points[points.len() - 1];
                if z <= first.0 {
                    return first.1;
                }
                if z >= last.0 {
                    return last.1;
                }
                for window in points.windows(2) {
                    let (z0, f0) = window[0];
                    let (z1, f1) = window[1];
                    if z <= z1 {
                        let t = (z - z0) / (z1 - z0);
                        return f0 + (f1 - f0) * t;
                    }
                }
                last.1
            }
        }
    }

    /// The most negative force this model can produce (its infimum).
    fn force_floor(&self) -> T {
        match self {
            ForceModel::Spring { .. } => T::min_value().unwrap(),
            ForceModel::SaturatingSpring { f_sat, .. } => *f_sat,
            ForceModel::Table { points } => points[0].1,
        }
    }

    /// The steepest force/insertion slope of the model, which sets the
    /// fastest contact transient a simulation step must resolve. `None` for
    /// a (degenerate) model with no restoring slope.
    pub fn max_stiffness(&self) -> Option<T> {
        match self {
            ForceModel::Spring { stiffness } | ForceModel::SaturatingSpring { stiffness, .. } => {
                Some(*stiffness)
            }
            ForceModel::Table { points } => {
                let mut steepest = T::zero();
                for w in points.windows(2) {
                    let slope = (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
                    steepest = steepest.max(slope);
                }
                if steepest > T::zero() {
                    Some(steepest)
                } else {
                    None
                }
            }
        }
    }

    /// Unique insertion `Z_d < 0` with `F(Z_d) = f_d`, by bisection to
    /// `1e-12` m. Requires `f_d < 0` and `f_d` strictly above the model's
    /// saturation floor (at the floor the preimage is not unique).
    pub fn insertion_for_force(&self, f_d: T) -> Result<T> {
        if !(f_d < T::zero()) {
            return Err(Error::ForceOutOfRange {
                requested: f_d.to_f64().unwrap_or(f64::NAN),
                detail: "desired force must be strictly negative".to_string(),
            });
        }
        if f_d <= self.force_floor() {
            return Err(Error::ForceOutOfRange {
                requested: f_d.to_f64().unwrap_or(f64::NAN),
                detail: "desired force is at or below the model's saturation floor".to_string(),
            });
        }

        // Bracket [lo, 0] with F(lo) ≤ f_d ≤ F(0) = 0, expanding downward.
        let mut lo = -real::<T>(1e-6);
        let mut guard = 0;
        while self.reaction_force(lo) > f_d {
            lo *= real::<T>(2.0);
            guard += 1;
            if guard > 200 {
                return Err(Error::ForceOutOfRange {
                    requested: f_d.to_f64().unwrap_or(f64::NAN),
                    detail: "could not bracket the requested force".to_string(),
                });
            }
        }
        let mut hi = T::zero();
        let tol = real::<T>(1e-12);
        while hi - lo > tol {
            let mid = (lo + hi) * real::<T>(0.5);
            if self.reaction_force(mid) > f_d {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok((lo + hi) * real::<T>(0.5))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn spring_values() {
        let m = ForceModel::<f64>::Spring { stiffness: 100.0 };
        assert_eq!(m.reaction_force(0.2), 0.0);
        assert_eq!(m.reaction_force(0.0), 0.0);
        assert_relative_eq!(m.reaction_force(-0.03), -3.0, epsilon = 1e-15);
    }

    #[test]
    fn spring_inversion_matches_closed_form() {
        let m = ForceModel::<f64>::Spring { stiffness: 100.0 };
        let z_d = m.insertion_for_force(-3.0).unwrap();
        assert_relative_eq!(z_d, -0.03, epsilon = 1e-10);
        assert!((m.reaction_force(z_d) - -3.0).abs() < 1e-9);
    }

    #[test]
    fn inversion_rejects_nonnegative_and_saturated_targets() {
        let m = ForceModel::<f64>::SaturatingSpring {
            stiffness: 300.0,
            f_sat: -10.0,
        };
        assert!(m.insertion_for_force(0.0).is_err());
        assert!(m.insertion_for_force(1.0).is_err());
        assert!(m.insertion_for_force(-10.0).is_err());
        assert!(m.insertion_for_force(-15.0).is_err());
        let z_d = m.insertion_for_force(-5.0).unwrap();
        assert!((m.reaction_force(z_d) - -5.0).abs() < 1e-9);
    }

    #[test]
    fn saturating_spring_is_monotone_on_a_grid() {
        let m = ForceModel::<f64>::SaturatingSpring {
            stiffness: 300.0,
            f_sat: -10.0,
        };
        let mut prev = f64::NEG_INFINITY;
        for i in 0..10_000 {
            let z = -0.2 + 0.3 * (i as f64) / 9_999.0;
            let f = m.reaction_force(z);
            assert!(f >= prev - 1e-15, "force must be nondecreasing in z");
            assert!(f <= 0.0 && f >= -10.0);
            prev = f;
        }
        assert_eq!(m.reaction_force(1.0), 0.0);
    }

    #[test]
    fn table_interpolates_and_clamps() {
        let m = ForceModel::Table {
            points: vec![(-0.1, -8.0), (-0.02, -2.0), (0.0, 0.0)],
        };
        m.validate().unwrap();
        assert_eq!(m.reaction_force(0.5), 0.0);
        assert_relative_eq!(m.reaction_force(-0.01), -1.0, epsilon = 1e-12);
        assert_relative_eq!(m.reaction_force(-0.06), -5.0, epsilon = 1e-12);
        assert_eq!(m.reaction_force(-0.5), -8.0);
        let z = m.insertion_for_force(-5.0).unwrap();
        assert_relative_eq!(z, -0.06, epsilon = 1e-10);
    }

    #[test]
    fn table_validation_rejects_bad_shapes() {
        // Unsorted in z.
        assert!(ForceModel::Table {
            points: vec![(0.0, 0.0), (-0.1, -3.0)],
        }
        .validate()
        .is_err());
        // Decreasing f with increasing z.
        assert!(ForceModel::Table {
            points: vec![(-0.1, -1.0), (0.0, -2.0)],
        }
        .validate()
        .is_err());
        // Positive force sample.
        assert!(ForceModel::Table {
            points: vec![(-0.1, -1.0), (0.0, 0.5)],
        }
        .validate()
        .is_err());
        // Last sample not at zero force.
        assert!(ForceModel::Table {
            points: vec![(-0.2, -3.0), (-0.1, -1.0)],
        }
        .validate()
        .is_err());
        assert!(ForceModel::Spring { stiffness: -1.0 }.validate().is_err());
    }

    #[test]
    fn hard_contact_inversion_is_tight() {
        let m = ForceModel::Spring { stiffness: 1e5 };
        let z_d = m.insertion_for_force(-3.0).unwrap();
        assert_relative_eq!(z_d, -3e-5, epsilon = 1e-11);
    }
}
