//! Cable transmissions: the unilateral plantarflexion cable, the antagonist
//! translation pair, the passive dorsiflexion bands and Bowden-sheath friction.

use crate::error::{Error, Result};

use super::{PlantConfig, PlantState};

/// Elastic stretch of the PF cable: motor take-up minus the payout the output
/// angle demands, referenced so that `(theta = 0, motor = 0)` is just taut.
pub fn pf_cable_stretch(theta: f64, motor_pos: f64, cfg: &PlantConfig) -> f64 {
    let geom = &cfg.pf_lever_geometry;
    cfg.pf_gear_ratio * motor_pos + geom.cable_path_length(theta) - geom.cable_path_length(0.0)
}

/// Motor position at which the PF cable is exactly taut at `theta`.
pub fn pf_motor_pos_for_taut(theta: f64, cfg: &PlantConfig) -> f64 {
    let geom = &cfg.pf_lever_geometry;
    (geom.cable_path_length(0.0) - geom.cable_path_length(theta)) / cfg.pf_gear_ratio
}

pub(crate) fn pf_tension_at(theta: f64, motor_pos: f64, cfg: &PlantConfig) -> f64 {
    cfg.pf_series_stiffness * pf_cable_stretch(theta, motor_pos, cfg).max(0.0)
}

pub(crate) fn pf_potential(theta: f64, motor_pos: f64, cfg: &PlantConfig) -> f64 {
    let e = pf_cable_stretch(theta, motor_pos, cfg).max(0.0);
    0.5 * cfg.pf_series_stiffness * e * e
}

/// Spring tension in the PF cable on the motor side of the sheath. Slack
/// returns exactly zero.
pub fn cable_tension_pf(state: &PlantState, cfg: &PlantConfig) -> f64 {
    pf_tension_at(state.theta, state.motor_pf_pos, cfg)
}

/// Passive band torque about the flexion axis (never plantarflexing).
pub fn band_torque(theta: f64, cfg: &PlantConfig) -> f64 {
    -cfg.df_band_stiffness * (theta - cfg.df_band_rest_angle).max(0.0)
}

pub(crate) fn band_potential(theta: f64, cfg: &PlantConfig) -> f64 {
    let e = (theta - cfg.df_band_rest_angle).max(0.0);
    0.5 * cfg.df_band_stiffness * e * e
}

/// Backlash: mismatch inside the dead band produces no stretch on either side.
pub fn trans_deadband(mismatch: f64, deadzone: f64) -> f64 {
    let half = 0.5 * deadzone;
    if mismatch > half {
        mismatch - half
    } else if mismatch < -half {
        mismatch + half
    } else {
        0.0
    }
}

fn side_tension(stretch: f64, cfg: &PlantConfig) -> f64 {
    (cfg.trans_pretension + cfg.trans_cable_stiffness * stretch).max(0.0)
}

fn side_potential(stretch: f64, cfg: &PlantConfig) -> f64 {
    let (p, k) = (cfg.trans_pretension, cfg.trans_cable_stiffness);
    if p + k * stretch >= 0.0 {
        p * stretch + 0.5 * k * stretch * stretch
    } else {
        -p * p / (2.0 * k)
    }
}

/// Tensions in the antagonist translation pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransForces {
    pub anterior: f64,
    pub posterior: f64,
}

impl TransForces {
    /// Net force on the stage, anterior positive.
    pub fn net(&self) -> f64 {
        self.anterior - self.posterior
    }
}

pub(crate) fn trans_forces_at(s: f64, motor_pos: f64, cfg: &PlantConfig) -> TransForces {
    let mismatch = cfg.trans_gear_ratio * motor_pos - s;
    let e = trans_deadband(mismatch, cfg.trans_deadzone);
    TransForces {
        anterior: side_tension(e, cfg),
        posterior: side_tension(-e, cfg),
    }
}

pub(crate) fn trans_potential(s: f64, motor_pos: f64, cfg: &PlantConfig) -> f64 {
    let mismatch = cfg.trans_gear_ratio * motor_pos - s;
    let e = trans_deadband(mismatch, cfg.trans_deadzone);
    side_potential(e, cfg) + side_potential(-e, cfg)
}

/// Both tensions of the translation pair; `.net()` is the signed stage force.
pub fn cable_force_trans(state: &PlantState, cfg: &PlantConfig) -> TransForces {
    trans_forces_at(state.s, state.motor_trans_pos, cfg)
}

/// Direction of cable travel through a Bowden sheath.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CableMotion {
    /// Motor side drives the load; friction eats tension on the way out.
    TowardLoad,
    /// Load drags cable back through the sheath.
    BackDriven,
    /// No relative slip: the output holds `held`, clamped to the stiction band.
    Static { held: f64 },
}

/// Capstan transmission of tension through a sheath with exponent `coeff`.
pub fn bowden_attenuation(tension_in: f64, motion: CableMotion, coeff: f64) -> Result<f64> {
    if !tension_in.is_finite() || !coeff.is_finite() {
        return Err(Error::NonFinite("bowden tension"));
    }
    if tension_in < 0.0 {
        return Err(Error::Domain(format!(
            "cable tension must be non-negative (got {tension_in})"
        )));
    }
    if coeff < 0.0 {
        return Err(Error::Domain(format!(
            "friction coefficient must be non-negative (got {coeff})"
        )));
    }
    let lo = tension_in * (-coeff).exp();
    let hi = tension_in * coeff.exp();
    Ok(match motion {
        CableMotion::TowardLoad => lo,
        CableMotion::BackDriven => hi,
        CableMotion::Static { held } => held.clamp(lo, hi),
    })
}
