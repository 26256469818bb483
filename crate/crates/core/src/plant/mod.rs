//! Plant model: the two-DoF ankle mechanism, its cable transmissions and sensors.
//!
//! Sign conventions used throughout the crate:
//!
//! * `theta` is the flexion angle, positive in plantarflexion.
//! * `s` is the AP stage position, positive anterior.
//! * Positive PF motor rotation takes up cable (tightens the plantarflexion cable).
//! * Positive translation drum rotation pulls the stage anteriorly.

mod dynamics;
mod geometry;
mod motor;
mod sensors;
mod transmission;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation};

pub use dynamics::{stored_energy, step_dynamics};
pub use geometry::{pf_moment_arm, LeverGeometry};
pub use motor::{saturate_motor, MotorLimits};
pub(crate) use sensors::stream_seed;
pub use sensors::{quantize, sample_sensors, SensorFrame, ACCEL_AXES, MOTOR_RESOLUTION, STAGE_RESOLUTION, THETA_RESOLUTION};
pub use transmission::{
    band_torque, bowden_attenuation, cable_force_trans, cable_tension_pf, pf_cable_stretch,
    pf_motor_pos_for_taut, trans_deadband, CableMotion, TransForces,
};

/// Physical parameters of the mechanism, both transmissions and the motors.
///
/// Keys carry their SI units in the configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantConfig {
    /// Foot and lever inertia about the flexion axis.
    #[serde(rename = "ankle_inertia_kg_m2")]
    pub ankle_inertia: f64,
    /// Translating stage plus foot assembly.
    #[serde(rename = "stage_mass_kg")]
    pub stage_mass: f64,
    #[serde(rename = "pf_lever")]
    pub pf_lever_geometry: LeverGeometry,
    /// Leaf spring and cable, lumped at the cable.
    #[serde(rename = "pf_series_stiffness_n_per_m")]
    pub pf_series_stiffness: f64,
    #[serde(rename = "df_band_stiffness_nm_per_rad")]
    pub df_band_stiffness: f64,
    /// Bands are slack for `theta` below this angle.
    #[serde(rename = "df_band_rest_angle_rad")]
    pub df_band_rest_angle: f64,
    /// Per side of the antagonist pair.
    #[serde(rename = "trans_cable_stiffness_n_per_m")]
    pub trans_cable_stiffness: f64,
    #[serde(rename = "trans_pretension_n")]
    pub trans_pretension: f64,
    /// Full width of the backlash band between drum and stage.
    #[serde(rename = "trans_deadzone_m")]
    pub trans_deadzone: f64,
    /// Capstan exponent (friction coefficient times wrap angle) per cable run.
    pub bowden_friction_coeff: f64,
    /// Cable take-up per PF motor radian (ballscrew lead / 2 pi).
    #[serde(rename = "pf_gear_ratio_m_per_rad")]
    pub pf_gear_ratio: f64,
    /// Cable take-up per translation motor radian (drum radius / gearhead ratio).
    #[serde(rename = "trans_gear_ratio_m_per_rad")]
    pub trans_gear_ratio: f64,
    #[serde(rename = "ankle_damping_nms_per_rad")]
    pub ankle_damping: f64,
    #[serde(rename = "stage_damping_ns_per_m")]
    pub stage_damping: f64,
    pub pf_motor: MotorLimits,
    pub trans_motor: MotorLimits,
    /// `[dorsiflexion limit, plantarflexion limit]`.
    #[serde(rename = "flexion_limits_rad")]
    pub flexion_limits: [f64; 2],
    /// `[posterior limit, anterior limit]`.
    #[serde(rename = "translation_limits_m")]
    pub translation_limits: [f64; 2],
    #[serde(rename = "timestep_s")]
    pub timestep: f64,
    #[serde(rename = "accel_noise_std_m_per_s2")]
    pub accel_noise_std: f64,
}

impl Default for PlantConfig {
    /// Calibrated defaults. Stiffnesses, pretension, drum radius and friction
    /// are not published for the hardware; they are tuned so the bench
    /// protocols land on the reported figures.
    fn default() -> Self {
        let pf_gear_ratio = 0.0025 / (2.0 * std::f64::consts::PI);
        let trans_gear_ratio = 0.02 / 23.0;
        Self {
            ankle_inertia: 0.02,
            stage_mass: 1.2,
            pf_lever_geometry: LeverGeometry {
                attachment_radius: 0.08,
                attachment_angle_offset: std::f64::consts::PI,
                cable_exit_point: [-0.08, 0.25],
            },
            pf_series_stiffness: 81_000.0,
            df_band_stiffness: 15.0,
            df_band_rest_angle: -0.05,
            trans_cable_stiffness: 300_000.0,
            trans_pretension: 180.0,
            trans_deadzone: 3.0e-4,
            bowden_friction_coeff: 0.16,
            pf_gear_ratio,
            trans_gear_ratio,
            ankle_damping: 1.5,
            stage_damping: 150.0,
            pf_motor: MotorLimits {
                max_velocity: 222.0,
                max_torque: 0.948,
                max_power: 139.0,
                no_load_velocity: 1000.0,
            },
            trans_motor: MotorLimits {
                max_velocity: 780.0,
                max_torque: 0.39,
                max_power: 133.0,
                no_load_velocity: 3000.0,
            },
            flexion_limits: [(-15.0f64).to_radians(), 38.0f64.to_radians()],
            translation_limits: [-0.05, 0.05],
            timestep: 0.001,
            accel_noise_std: 0.05,
        }
    }
}

impl PlantConfig {
    /// Lists every violated invariant; empty when the configuration is usable.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut positive = |key: &str, v: f64| {
            if !(v.is_finite() && v > 0.0) {
                out.push(Violation::new(key, format!("must be strictly positive (got {v})")));
            }
        };
        positive("ankle_inertia_kg_m2", self.ankle_inertia);
        positive("stage_mass_kg", self.stage_mass);
        positive("pf_lever.attachment_radius_m", self.pf_lever_geometry.attachment_radius);
        positive("pf_series_stiffness_n_per_m", self.pf_series_stiffness);
        positive("df_band_stiffness_nm_per_rad", self.df_band_stiffness);
        positive("trans_cable_stiffness_n_per_m", self.trans_cable_stiffness);
        positive("pf_gear_ratio_m_per_rad", self.pf_gear_ratio);
        positive("trans_gear_ratio_m_per_rad", self.trans_gear_ratio);
        for (name, m) in [("pf_motor", &self.pf_motor), ("trans_motor", &self.trans_motor)] {
            positive(&format!("{name}.max_velocity_rad_per_s"), m.max_velocity);
            positive(&format!("{name}.max_torque_nm"), m.max_torque);
            positive(&format!("{name}.max_power_w"), m.max_power);
            positive(&format!("{name}.no_load_velocity_rad_per_s"), m.no_load_velocity);
        }

        let mut non_negative = |key: &str, v: f64| {
            if !(v.is_finite() && v >= 0.0) {
                out.push(Violation::new(key, format!("must be non-negative (got {v})")));
            }
        };
        non_negative("trans_deadzone_m", self.trans_deadzone);
        non_negative("trans_pretension_n", self.trans_pretension);
        non_negative("bowden_friction_coeff", self.bowden_friction_coeff);
        non_negative("ankle_damping_nms_per_rad", self.ankle_damping);
        non_negative("stage_damping_ns_per_m", self.stage_damping);
        non_negative("accel_noise_std_m_per_s2", self.accel_noise_std);

        if !self.df_band_rest_angle.is_finite() {
            out.push(Violation::new("df_band_rest_angle_rad", "must be finite"));
        }
        let [lo, hi] = self.flexion_limits;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            out.push(Violation::new("flexion_limits_rad", "joint limits must be finite and ordered"));
        }
        let [lo, hi] = self.translation_limits;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            out.push(Violation::new(
                "translation_limits_m",
                "joint limits must be finite and ordered",
            ));
        }
        if !(self.timestep > 0.0 && self.timestep <= 0.002) {
            out.push(Violation::new(
                "timestep_s",
                format!("must lie in (0, 2 ms] (got {})", self.timestep),
            ));
        }

        // The moment arm must stay positive over the whole flexion range.
        let [lo, hi] = self.flexion_limits;
        if out.is_empty() {
            let n = 200;
            for i in 0..=n {
                let theta = lo + (hi - lo) * i as f64 / n as f64;
                match pf_moment_arm(theta, &self.pf_lever_geometry) {
                    Ok(arm) if arm > 0.0 => {}
                    Ok(arm) => {
                        out.push(Violation::new(
                            "pf_lever",
                            format!("moment arm must be strictly positive over the flexion range (got {arm} at {theta} rad)"),
                        ));
                        break;
                    }
                    Err(e) => {
                        out.push(Violation::new("pf_lever", e.to_string()));
                        break;
                    }
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Invalid(v))
        }
    }

    /// Copy with every Bowden friction term removed.
    pub fn frictionless(&self) -> Self {
        Self {
            bowden_friction_coeff: 0.0,
            ..self.clone()
        }
    }
}

/// Accumulated energy flows since the state was created, in joules.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyAccount {
    pub motor_work: f64,
    pub external_work: f64,
    /// Bowden friction plus joint viscous damping.
    pub friction_loss: f64,
    /// Work absorbed by hard stops and locked couplings.
    pub hard_stop_loss: f64,
}

impl EnergyAccount {
    /// Sum of the absolute values of every flow; the scale for audit tolerances.
    pub fn throughput(&self) -> f64 {
        self.motor_work.abs() + self.external_work.abs() + self.friction_loss.abs() + self.hard_stop_loss.abs()
    }
}

/// Continuous state of the mechanism and both motors.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlantState {
    pub theta: f64,
    pub theta_dot: f64,
    pub s: f64,
    pub s_dot: f64,
    pub motor_pf_pos: f64,
    pub motor_trans_pos: f64,
    pub motor_pf_vel: f64,
    pub motor_trans_vel: f64,
    pub time: f64,
    pub energy: EnergyAccount,
}

impl PlantState {
    /// At rest at `theta`/`s` with the PF cable just taut and the translation
    /// drum centred on the stage.
    pub fn taut_at(theta: f64, s: f64, cfg: &PlantConfig) -> Self {
        Self {
            theta,
            s,
            motor_pf_pos: pf_motor_pos_for_taut(theta, cfg),
            motor_trans_pos: s / cfg.trans_gear_ratio,
            ..Self::default()
        }
    }

    pub fn is_finite(&self) -> bool {
        [
            self.theta,
            self.theta_dot,
            self.s,
            self.s_dot,
            self.motor_pf_pos,
            self.motor_trans_pos,
            self.motor_pf_vel,
            self.motor_trans_vel,
            self.time,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// Velocity commands for the two motor drivers (motor shaft rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MotorVelocityCommand {
    pub pf_vel: f64,
    pub trans_vel: f64,
}

impl MotorVelocityCommand {
    pub const ZERO: Self = Self {
        pf_vel: 0.0,
        trans_vel: 0.0,
    };
}

/// How an output coordinate is tied to the outside world for one step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Coupling {
    #[default]
    Free,
    /// Isometric fixture: the coordinate does not move.
    Locked,
    /// Linear spring (and optional damper) to an anchor; a bench spring load
    /// or a stiff virtual wearer.
    Spring {
        rate: f64,
        anchor: f64,
        damping: f64,
        anchor_velocity: f64,
    },
}

impl Coupling {
    pub fn spring(rate: f64, anchor: f64) -> Self {
        Coupling::Spring {
            rate,
            anchor,
            damping: 0.0,
            anchor_velocity: 0.0,
        }
    }

    /// Force the coupling exerts on a coordinate at `q` moving at `v`.
    pub fn force(&self, q: f64, v: f64) -> f64 {
        match *self {
            Coupling::Spring {
                rate,
                anchor,
                damping,
                anchor_velocity,
            } => -rate * (q - anchor) - damping * (v - anchor_velocity),
            _ => 0.0,
        }
    }
}

/// Loads from the wearer, the ground or a bench fixture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExternalLoad {
    /// About the flexion axis, positive plantarflexing.
    pub ankle_torque_ext: f64,
    /// On the stage, positive anterior.
    pub ap_force_ext: f64,
    /// True acceleration at the accelerometer, gravity included.
    pub accel_truth: [f64; 3],
    pub ankle_coupling: Coupling,
    pub stage_coupling: Coupling,
}

impl Default for ExternalLoad {
    fn default() -> Self {
        Self {
            ankle_torque_ext: 0.0,
            ap_force_ext: 0.0,
            accel_truth: [0.0, 0.0, 9.81],
            ankle_coupling: Coupling::Free,
            stage_coupling: Coupling::Free,
        }
    }
}

impl ExternalLoad {
    pub fn is_finite(&self) -> bool {
        let coupling_ok = |c: &Coupling| match *c {
            Coupling::Spring {
                rate,
                anchor,
                damping,
                anchor_velocity,
            } => [rate, anchor, damping, anchor_velocity].iter().all(|v| v.is_finite()),
            _ => true,
        };
        self.ankle_torque_ext.is_finite()
            && self.ap_force_ext.is_finite()
            && self.accel_truth.iter().all(|v| v.is_finite())
            && coupling_ok(&self.ankle_coupling)
            && coupling_ok(&self.stage_coupling)
    }
}
