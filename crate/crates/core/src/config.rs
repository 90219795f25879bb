//! TOML scenario files.
//!
//! A scenario file either starts from a named preset and overrides parts of
//! it, or describes a run from scratch. Angles are written in **degrees**
//! (`psi_deg`, `arm_deg`, rate/position limits, and the angular entries of
//! disturbance deltas) and converted to radians on load; rate limits written
//! as `inf` mean unbounded. All values load as `f64`.
//!
//! ```toml
//! name = "press-vertical"
//! duration = 25.0
//!
//! [robot]
//! incline_deg = 0.0
//!
//! [shaping]
//! f_d = -3.0
//! z_d_star = -0.02
//!
//! [force]
//! family = "spring"
//! stiffness = 300.0
//!
//! [initial]
//! x = -0.5
//! y = 0.2
//! insertion = 1.3
//! psi_deg = 15.0
//! arm_deg = [-25.0, -50.0]
//!
//! [reference]
//! x = 0.0
//! y = 0.0
//! ```

use serde::{Deserialize, Serialize};

use crate::controller::Controller;
use crate::environment::ForceModel;
use crate::error::{Error, Result};
use crate::kinematics::{Configuration, RobotModel};
use crate::limits::{Bound, LimitConfig};
use crate::shaping::{AlignmentPotential, Kappa1, KappaF, Shaping};
use crate::simulator::{contact_limited_dt, Disturbance, Reference, Scenario, Waypoint};
use crate::task::PlanarTarget;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    /// Run name (defaults to the preset name, or `custom`).
    pub name: Option<String>,
    /// Optional preset to start from; sections below override its parts.
    pub preset: Option<String>,
    /// Step size in seconds (default 1/60; always tightened automatically
    /// for stiff force models).
    pub dt: Option<f64>,
    pub duration: Option<f64>,
    pub log_every: Option<usize>,
    pub robot: Option<RobotSection>,
    pub shaping: Option<ShapingSection>,
    pub limits: Option<LimitsSection>,
    pub force: Option<ForceModel<f64>>,
    pub initial: Option<InitialSection>,
    pub reference: Option<ReferenceSection>,
    #[serde(default, rename = "disturbance")]
    pub disturbances: Vec<DisturbanceSection>,
    /// Damping weights, one per coordinate; the ż entry must be zero.
    pub epsilon: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotSection {
    /// Surface inclination from vertical, degrees (0 = vertical wall).
    pub incline_deg: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapingSection {
    pub f_d: Option<f64>,
    pub z_d_star: Option<f64>,
    pub kappa_f: Option<KappaF<f64>>,
    pub v_a_xy: Option<AlignmentPotential<f64>>,
    pub kappa_a_o: Option<Kappa1<f64>>,
    pub kappa_a: Option<Kappa1<f64>>,
    pub kappa_b: Option<Kappa1<f64>>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitsSection {
    /// Symmetric vehicle rate limits; `inf` lifts the bound.
    pub x_rate: Option<f64>,
    pub y_rate: Option<f64>,
    pub z_rate: Option<f64>,
    pub psi_rate_deg: Option<f64>,
    /// Symmetric joint rate limits, degrees per second, one per joint.
    pub arm_rate_deg: Option<Vec<f64>>,
    /// Joint position stops, degrees, one `[lower, upper]` pair per joint.
    pub arm_pos_deg: Option<Vec<[f64; 2]>>,
    /// Blending gain of the position-stop rate taper.
    pub k_l: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub x: Option<f64>,
    pub y: Option<f64>,
    /// Vehicle height coordinate. Ignored when `insertion` is given.
    pub z: Option<f64>,
    /// If set, the vehicle height is chosen so the *tool* starts at this
    /// distance from the surface (negative = pressed in).
    pub insertion: Option<f64>,
    pub psi_deg: Option<f64>,
    pub arm_deg: Vec<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSection {
    pub x: Option<f64>,
    pub y: Option<f64>,
    /// Timed planar waypoints `[time, x, y]`; mutually exclusive with
    /// `x`/`y`.
    pub waypoints: Option<Vec<[f64; 3]>>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceSection {
    pub time: f64,
    /// Additive configuration jump; the yaw and joint entries are degrees.
    pub delta: Vec<f64>,
}

impl ScenarioFile {
    /// Resolves the file into a runnable scenario.
    pub fn build(&self) -> Result<Scenario<f64>> {
        let mut sc = match &self.preset {
            Some(p) => Scenario::preset(p)?,
            None => {
                if self.initial.is_none() {
                    return Err(Error::Config(
                        "a scenario needs either 'preset' or an [initial] section".into(),
                    ));
                }
                let model = RobotModel::desk(0.0);
                let epsilon = Controller::desk_epsilon(model.dof());
                Scenario {
                    name: "custom".into(),
                    shaping: Shaping::desk_defaults(-3.0, -0.02),
                    limits: LimitConfig::desk_defaults(2),
                    epsilon,
                    force: ForceModel::Spring { stiffness: 300.0 },
                    q0: Configuration::new(0.0, 0.0, 1.0, 0.0, &[0.0, 0.0]),
                    reference: Reference::Fixed(PlanarTarget {
                        x_ref: 0.0,
                        y_ref: 0.0,
                    }),
                    disturbances: Vec::new(),
                    dt: 1.0 / 60.0,
                    duration: 20.0,
                    log_every: 1,
                    model,
                }
            }
        };

        if let Some(name) = &self.name {
            sc.name = name.clone();
        }
        if let Some(robot) = &self.robot {
            if let Some(deg) = robot.incline_deg {
                sc.model = RobotModel::desk(deg.to_radians());
            }
        }
        if let Some(s) = &self.shaping {
            if let Some(v) = s.f_d {
                sc.shaping.f_d = v;
            }
            if let Some(v) = s.z_d_star {
                sc.shaping.z_d_star = v;
            }
            if let Some(v) = s.kappa_f {
                sc.shaping.kappa_f = v;
            }
            if let Some(v) = s.v_a_xy {
                sc.shaping.v_a_xy = v;
            }
            if let Some(v) = s.kappa_a_o {
                sc.shaping.kappa_a_o = v;
            }
            if let Some(v) = s.kappa_a {
                sc.shaping.kappa_a = v;
            }
            if let Some(v) = s.kappa_b {
                sc.shaping.kappa_b = v;
            }
        }
        if let Some(l) = &self.limits {
            let sym = |v: f64, what: &str| -> Result<(Bound<f64>, Bound<f64>)> {
                if v.is_infinite() {
                    Ok((Bound::Unbounded, Bound::Unbounded))
                } else if v > 0.0 {
                    Ok((Bound::Finite(-v), Bound::Finite(v)))
                } else {
                    Err(Error::Config(format!(
                        "limits.{what} must be positive or inf, got {v}"
                    )))
                }
            };
            if let Some(v) = l.x_rate {
                let (lo, hi) = sym(v, "x_rate")?;
                sc.limits.base_lower[0] = lo;
                sc.limits.base_upper[0] = hi;
            }
            if let Some(v) = l.y_rate {
                let (lo, hi) = sym(v, "y_rate")?;
                sc.limits.base_lower[1] = lo;
                sc.limits.base_upper[1] = hi;
            }
            if let Some(v) = l.z_rate {
                let (lo, hi) = sym(v, "z_rate")?;
                sc.limits.base_lower[2] = lo;
                sc.limits.base_upper[2] = hi;
            }
            if let Some(v) = l.psi_rate_deg {
                let (lo, hi) = sym(v.to_radians(), "psi_rate_deg")?;
                sc.limits.base_lower[3] = lo;
                sc.limits.base_upper[3] = hi;
            }
            if let Some(rates) = &l.arm_rate_deg {
                if rates.len() != sc.limits.arm_dof() {
                    return Err(Error::Config(format!(
                        "limits.arm_rate_deg needs {} entries, got {}",
                        sc.limits.arm_dof(),
                        rates.len()
                    )));
                }
                sc.limits.arm_rate_lower = rates.iter().map(|v| -v.to_radians()).collect();
                sc.limits.arm_rate_upper = rates.iter().map(|v| v.to_radians()).collect();
            }
            if let Some(pos) = &l.arm_pos_deg {
                if pos.len() != sc.limits.arm_dof() {
                    return Err(Error::Config(format!(
                        "limits.arm_pos_deg needs {} entries, got {}",
                        sc.limits.arm_dof(),
                        pos.len()
                    )));
                }
                sc.limits.arm_pos_lower = pos.iter().map(|p| p[0].to_radians()).collect();
                sc.limits.arm_pos_upper = pos.iter().map(|p| p[1].to_radians()).collect();
            }
            if let Some(v) = l.k_l {
                sc.limits.k_l = v;
            }
        }
        if let Some(force) = &self.force {
            sc.force = force.clone();
        }
        if let Some(eps) = &self.epsilon {
            if eps.len() != sc.model.dof() {
                return Err(Error::Config(format!(
                    "epsilon needs {} entries, got {}",
                    sc.model.dof(),
                    eps.len()
                )));
            }
            sc.epsilon = nalgebra::DVector::from_row_slice(eps);
        }
        if let Some(init) = &self.initial {
            if init.arm_deg.len() != sc.model.dof() - 4 {
                return Err(Error::Config(format!(
                    "initial.arm_deg needs {} entries, got {}",
                    sc.model.dof() - 4,
                    init.arm_deg.len()
                )));
            }
            let arm: Vec<f64> = init.arm_deg.iter().map(|d| d.to_radians()).collect();
            let psi = init.psi_deg.unwrap_or(0.0).to_radians();
            let x = init.x.unwrap_or(0.0);
            let y = init.y.unwrap_or(0.0);
            let z = match (init.insertion, init.z) {
                (Some(ins), _) => {
                    let probe = Configuration::new(0.0, 0.0, 0.0, psi, &arm);
                    let ee = sc.model.forward_kinematics(&probe)?;
                    ins - ee.z()
                }
                (None, Some(z)) => z,
                (None, None) => {
                    return Err(Error::Config(
                        "initial needs either 'z' or 'insertion'".into(),
                    ))
                }
            };
            sc.q0 = Configuration::new(x, y, z, psi, &arm);
        }
        if let Some(r) = &self.reference {
            match (&r.waypoints, r.x.is_some() || r.y.is_some()) {
                (Some(_), true) => {
                    return Err(Error::Config(
                        "reference: give either x/y or waypoints, not both".into(),
                    ))
                }
                (Some(w), false) => {
                    sc.reference = Reference::Waypoints(
                        w.iter()
                            .map(|&[t, x, y]| Waypoint { time: t, x, y })
                            .collect(),
                    );
                }
                (None, _) => {
                    sc.reference = Reference::Fixed(PlanarTarget {
                        x_ref: r.x.unwrap_or(0.0),
                        y_ref: r.y.unwrap_or(0.0),
                    });
                }
            }
        }
        for (i, d) in self.disturbances.iter().enumerate() {
            if d.delta.len() != sc.model.dof() {
                return Err(Error::Config(format!(
                    "disturbance #{i}: delta needs {} entries, got {}",
                    sc.model.dof(),
                    d.delta.len()
                )));
            }
            let mut delta = d.delta.clone();
            for v in delta.iter_mut().skip(3) {
                *v = v.to_radians();
            }
            sc.disturbances.push(Disturbance {
                time: d.time,
                delta,
            });
        }
        if let Some(v) = self.duration {
            sc.duration = v;
        }
        if let Some(v) = self.log_every {
            sc.log_every = v;
        }
        if let Some(v) = self.dt {
            sc.dt = v;
        }
        // Stiff contacts need a resolved transient no matter what the file
        // says.
        sc.dt = contact_limited_dt(sc.dt, &sc.force);

        sc.validate()?;
        Ok(sc)
    }
}

/// Parses a scenario from TOML text.
pub fn load_scenario_str(text: &str) -> Result<Scenario<f64>> {
    let file: ScenarioFile =
        toml::from_str(text).map_err(|e| Error::Config(format!("scenario TOML: {e}")))?;
    file.build()
}

/// Reads and parses a scenario file.
pub fn load_scenario_path(path: &std::path::Path) -> Result<Scenario<f64>> {
    let text = std::fs::read_to_string(path)?;
    load_scenario_str(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn preset_with_overrides() {
        let sc = load_scenario_str(
            r#"
            preset = "exp1"
            name = "softer"
            duration = 10.0

            [shaping]
            f_d = -2.0

            [force]
            family = "spring"
            stiffness = 500.0
            "#,
        )
        .unwrap();
        assert_eq!(sc.name, "softer");
        assert_eq!(sc.shaping.f_d, -2.0);
        assert_eq!(sc.duration, 10.0);
        assert!(matches!(sc.force, ForceModel::Spring { stiffness } if stiffness == 500.0));
    }

    #[test]
    fn standalone_scenario_with_insertion_placement() {
        let sc = load_scenario_str(
            r#"
            duration = 5.0

            [initial]
            y = 0.2
            insertion = 1.1
            psi_deg = 15.0
            arm_deg = [-25.0, -50.0]

            [reference]
            y = 0.05
            "#,
        )
        .unwrap();
        let ee = sc.model.forward_kinematics(&sc.q0).unwrap();
        assert_relative_eq!(ee.z(), 1.1, epsilon = 1e-12);
        assert_relative_eq!(sc.q0.psi(), 15f64.to_radians());
        assert_eq!(sc.reference.target_at(0.0).y_ref, 0.05);
    }

    #[test]
    fn degrees_and_inf_are_converted() {
        let sc = load_scenario_str(
            r#"
            preset = "exp1"

            [limits]
            z_rate = 0.25
            psi_rate_deg = 10.0
            arm_rate_deg = [15.0, 15.0]
            arm_pos_deg = [[-60.0, 60.0], [-90.0, 90.0]]

            [[disturbance]]
            time = 1.0
            delta = [0.0, 0.0, 0.0, 5.0, 0.0, 0.0]
            "#,
        )
        .unwrap();
        assert_eq!(
            sc.limits.base_upper[2],
            crate::limits::Bound::Finite(0.25)
        );
        assert_eq!(
            sc.limits.base_upper[3],
            crate::limits::Bound::Finite(10f64.to_radians())
        );
        assert_relative_eq!(sc.limits.arm_rate_upper[0], 15f64.to_radians());
        assert_relative_eq!(sc.limits.arm_pos_lower[1], -90f64.to_radians());
        assert_relative_eq!(sc.disturbances[0].delta[3], 5f64.to_radians());

        let unbounded = load_scenario_str(
            r#"
            preset = "exp1-zlim"

            [limits]
            z_rate = inf
            "#,
        )
        .unwrap();
        assert_eq!(
            unbounded.limits.base_upper[2],
            crate::limits::Bound::Unbounded
        );
    }

    #[test]
    fn stiff_force_models_tighten_dt() {
        let sc = load_scenario_str(
            r#"
            preset = "exp1"

            [force]
            family = "spring"
            stiffness = 1e5
            "#,
        )
        .unwrap();
        assert_relative_eq!(sc.dt, 1.5e-4);
    }

    #[test]
    fn helpful_rejections() {
        // Unknown field.
        assert!(load_scenario_str("presett = \"exp1\"").is_err());
        // Neither preset nor initial.
        assert!(load_scenario_str("duration = 1.0").is_err());
        // Both fixed reference and waypoints.
        let err = load_scenario_str(
            r#"
            preset = "exp1"
            [reference]
            x = 0.0
            waypoints = [[0.0, 0.0, 0.0]]
            "#,
        )
        .unwrap_err();
        assert!(format!("{err}").contains("waypoints"));
        // Wrong arm dimension.
        let err = load_scenario_str(
            r#"
            [initial]
            z = 1.0
            arm_deg = [-25.0]
            "#,
        )
        .unwrap_err();
        assert!(format!("{err}").contains("arm_deg"));
        // Barrier offset below the commanded insertion depth.
        let err = load_scenario_str(
            r#"
            preset = "exp1"
            [shaping]
            z_d_star = -1e-4
            "#,
        )
        .unwrap_err();
        assert!(format!("{err}").to_lowercase().contains("insertion"));
    }
}
