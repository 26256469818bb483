use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::controller::{ControlMode, Controller, ControllerConfig};
use crate::csvio::Table;
use crate::error::{Error, Result};
use crate::plant::{
    sample_sensors, step_dynamics, stream_seed, Coupling, ExternalLoad, MotorVelocityCommand, PlantConfig, PlantState,
};

use super::profile::StrideProfile;
use super::stats::segment_strides;

const GRAVITY: f64 = 9.81;

/// Virtual wearer, heel-strike realism and trial length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialSettings {
    /// Stop once this many strides have been segmented as valid.
    pub n_strides: usize,
    /// Hard cap on simulated strides.
    pub max_strides: usize,
    /// Ankle position source: much stiffer than any controller impedance.
    #[serde(rename = "wearer_stiffness_nm_per_rad")]
    pub wearer_stiffness: f64,
    #[serde(rename = "wearer_damping_nms_per_rad")]
    pub wearer_damping: f64,
    /// Peak of the raised-cosine acceleration spike at each marker.
    #[serde(rename = "heel_strike_spike_m_per_s2")]
    pub spike_magnitude: f64,
    #[serde(rename = "heel_strike_spike_width_s")]
    pub spike_width: f64,
    /// Quiet standing before the first heel strike.
    #[serde(rename = "lead_in_s")]
    pub lead_in: f64,
}

impl Default for TrialSettings {
    fn default() -> Self {
        Self {
            n_strides: 50,
            max_strides: 75,
            wearer_stiffness: 5000.0,
            wearer_damping: 50.0,
            spike_magnitude: 40.0,
            spike_width: 0.01,
            lead_in: 0.5,
        }
    }
}

impl TrialSettings {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.n_strides < 1 {
            out.push("n_strides must be at least 1".into());
        }
        if self.max_strides < self.n_strides {
            out.push(format!("max_strides ({}) is below n_strides ({})", self.max_strides, self.n_strides));
        }
        for (k, v) in [
            ("wearer_stiffness_nm_per_rad", self.wearer_stiffness),
            ("heel_strike_spike_width_s", self.spike_width),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                out.push(format!("{k} must be positive (got {v})"));
            }
        }
        for (k, v) in [
            ("wearer_damping_nms_per_rad", self.wearer_damping),
            ("heel_strike_spike_m_per_s2", self.spike_magnitude),
            ("lead_in_s", self.lead_in),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                out.push(format!("{k} must be non-negative (got {v})"));
            }
        }
        out
    }
}

/// One row per control period.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrialLog {
    pub time: Vec<f64>,
    pub phase: Vec<u8>,
    pub theta_ref: Vec<f64>,
    pub theta_meas: Vec<f64>,
    /// Translation target the controller is tracking.
    pub s_ref: Vec<f64>,
    pub s_meas: Vec<f64>,
    pub torque_cmd: Vec<f64>,
    /// Deflection-based torque estimate.
    pub torque_meas: Vec<f64>,
    /// A heel-strike spike starts inside this control period.
    pub heel_marker: Vec<bool>,
    pub heel_strike: Vec<bool>,
    pub toe_off: Vec<bool>,
    pub fault: Vec<bool>,
    /// Profile stride index; -1 during the lead-in.
    pub stride: Vec<i64>,
}

pub const LOG_COLUMNS: [&str; 13] = [
    "time_s",
    "phase",
    "theta_ref_rad",
    "theta_meas_rad",
    "s_ref_m",
    "s_meas_m",
    "torque_cmd_nm",
    "torque_meas_nm",
    "heel_marker",
    "heel_strike",
    "toe_off",
    "fault",
    "stride",
];

fn flag(v: &[bool]) -> Vec<f64> {
    v.iter().map(|b| f64::from(u8::from(*b))).collect()
}

impl TrialLog {
    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    pub fn to_table(&self) -> Table {
        let c = LOG_COLUMNS;
        Table::new()
            .with(c[0], self.time.clone())
            .with(c[1], self.phase.iter().map(|p| f64::from(*p)).collect())
            .with(c[2], self.theta_ref.clone())
            .with(c[3], self.theta_meas.clone())
            .with(c[4], self.s_ref.clone())
            .with(c[5], self.s_meas.clone())
            .with(c[6], self.torque_cmd.clone())
            .with(c[7], self.torque_meas.clone())
            .with(c[8], flag(&self.heel_marker))
            .with(c[9], flag(&self.heel_strike))
            .with(c[10], flag(&self.toe_off))
            .with(c[11], flag(&self.fault))
            .with(c[12], self.stride.iter().map(|s| *s as f64).collect())
    }

    pub fn from_table(t: &Table) -> Result<Self> {
        let col = |name: &str| {
            t.column(name)
                .map(<[f64]>::to_vec)
                .ok_or_else(|| Error::Domain(format!("trial log is missing column {name}")))
        };
        let flags = |name: &str| col(name).map(|v| v.iter().map(|x| *x != 0.0).collect());
        let c = LOG_COLUMNS;
        Ok(Self {
            time: col(c[0])?,
            phase: col(c[1])?.iter().map(|p| *p as u8).collect(),
            theta_ref: col(c[2])?,
            theta_meas: col(c[3])?,
            s_ref: col(c[4])?,
            s_meas: col(c[5])?,
            torque_cmd: col(c[6])?,
            torque_meas: col(c[7])?,
            heel_marker: flags(c[8])?,
            heel_strike: flags(c[9])?,
            toe_off: flags(c[10])?,
            fault: flags(c[11])?,
            stride: col(c[12])?.iter().map(|s| *s as i64).collect(),
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        self.to_table().write(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_table(&Table::read(path)?)
    }
}

/// Raised-cosine pulse of unit peak over `[0, width)`.
fn pulse(t: f64, width: f64) -> f64 {
    if (0.0..width).contains(&t) {
        0.5 * (1.0 - (2.0 * PI * t / width).cos())
    } else {
        0.0
    }
}

/// Closed-loop walking: the virtual wearer drives the ankle toward the
/// profile angle, ground loads act on the ankle and stage, and the controller
/// sees sensor frames only. Runs until `n_strides` valid strides have been
/// segmented or `max_strides` have been simulated.
pub fn run_walking_trial(
    plant: &PlantConfig,
    controller: &ControllerConfig,
    profile: &StrideProfile,
    mode: ControlMode,
    settings: &TrialSettings,
    seed: u64,
) -> Result<TrialLog> {
    plant.validate()?;
    profile.validate(plant)?;
    let ctrl_cfg = ControllerConfig {
        mode,
        ..controller.clone()
    };
    ctrl_cfg.validate(plant)?;
    let problems = settings.violations();
    if !problems.is_empty() {
        return Err(Error::Domain(problems.join("; ")));
    }

    let dt = plant.timestep;
    let decimation = (ctrl_cfg.period() / dt).round() as u64;
    let period = profile.stride_duration;
    let markers = profile.markers();
    let h = 1e-6;

    let mut ctrl = Controller::new(ctrl_cfg, plant);
    let mut state = PlantState::taut_at(profile.samples[0].theta_ref, 0.0, plant);
    let mut cmd = MotorVelocityCommand::ZERO;
    let mut log = TrialLog::default();
    let mut next_check = 1;

    for k in 0u64.. {
        let t = k as f64 * dt;
        state.time = t;
        let walk = t - settings.lead_in;
        let (stride, progress) = if walk >= 0.0 {
            ((walk / period).floor() as i64, (walk / period).rem_euclid(1.0))
        } else {
            (-1, 0.0)
        };
        if stride >= 0 && stride as usize >= settings.max_strides {
            break;
        }
        // Check after the next heel strike has had time to close the window.
        if walk >= (next_check as f64 + 0.25) * period {
            let valid = segment_strides(&log).valid.len();
            if valid >= settings.n_strides {
                break;
            }
            next_check += 1;
        }

        let walking = stride >= 0;
        let sample = profile.at(progress);
        let rate = if walking {
            (profile.at(progress + h).theta_ref - profile.at(progress - h).theta_ref) / (2.0 * h * period)
        } else {
            0.0
        };
        let mut accel = [0.0, 0.0, GRAVITY];
        let mut marker_here = false;
        if walking {
            for &m in &markers {
                for base in [stride - 1, stride, stride + 1] {
                    let at = ((settings.lead_in + (base as f64 + m) * period) / dt).round() as i64;
                    let since = k as i64 - at;
                    accel[2] += settings.spike_magnitude * pulse(since as f64 * dt, settings.spike_width);
                    if (0..decimation as i64).contains(&since) && k % decimation == 0 {
                        marker_here = true;
                    }
                }
            }
        }
        let ext = ExternalLoad {
            ankle_torque_ext: if walking { sample.ankle_torque_ext } else { 0.0 },
            ap_force_ext: if walking { sample.ap_force_ext } else { 0.0 },
            accel_truth: accel,
            ankle_coupling: Coupling::Spring {
                rate: settings.wearer_stiffness,
                anchor: sample.theta_ref,
                damping: settings.wearer_damping,
                anchor_velocity: rate,
            },
            stage_coupling: Coupling::Free,
        };

        if k % decimation == 0 {
            let frame = sample_sensors(&state, &ext, plant, stream_seed(seed, k));
            cmd = ctrl.control_step(&frame);
            let tr = ctrl.trace().copied().ok_or(Error::Domain("controller produced no trace".into()))?;
            log.time.push(t);
            log.phase.push(tr.phase.code());
            log.theta_ref.push(sample.theta_ref);
            log.theta_meas.push(frame.theta_meas);
            log.s_ref.push(tr.trans_target);
            log.s_meas.push(frame.s_meas);
            log.torque_cmd.push(tr.torque_cmd);
            log.torque_meas.push(frame.tau_pf_est);
            log.heel_marker.push(marker_here);
            log.heel_strike.push(tr.heel_strike);
            log.toe_off.push(tr.toe_off);
            log.fault.push(tr.fault);
            log.stride.push(stride);
        }
        state = step_dynamics(&state, &cmd, &ext, plant)?;
    }
    Ok(log)
}
