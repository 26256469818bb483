//! Hierarchical walking controller: event detection, gait-phase state machine,
//! per-phase targets and the low-level PD loops.
//!
//! The controller reads only [`SensorFrame`](crate::plant::SensorFrame)s and
//! emits [`MotorVelocityCommand`](crate::plant::MotorVelocityCommand)s.

mod events;
mod fsm;
mod laws;
mod runtime;
mod targets;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation};
use crate::plant::PlantConfig;

pub use events::{detect_heel_strikes, detect_toe_off, HeelStrikeDetector, ToeOffDetector};
pub use fsm::{is_legal_transition, update_fsm, FsmEvents, FsmOutcome, FsmRules, GaitPhase, PhaseState};
pub use laws::{
    pd_position_loop, pd_torque_loop, segmented_stiffness_law, stiffness_law, torque_to_tension, ImpedanceParams,
    LowPass, PdGains, PdLoop, TensionCommand, MOMENT_ARM_FLOOR,
};
pub use runtime::{ControlTrace, Controller, Diagnostics, PfControlMode};
pub use targets::{phase_targets, PfTarget, PhaseTargets, TransTarget};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ControlMode {
    /// Powered plantarflexion only; the stage is held at zero.
    #[serde(rename = "revolute_1dof")]
    Revolute1DoF,
    /// Plantarflexion plus anterior-then-posterior stance translation.
    #[serde(rename = "two_dof")]
    TwoDoF,
    /// Both motors hold their position; used on the bench.
    #[serde(rename = "static_position")]
    StaticPosition,
}

/// Thresholds, per-phase impedance parameters, targets and loop gains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    pub mode: ControlMode,
    pub control_rate_hz: f64,
    #[serde(rename = "jerk_threshold_m_per_s3")]
    pub jerk_threshold: f64,
    pub jerk_filter_hz: f64,
    #[serde(rename = "heel_strike_refractory_s")]
    pub heel_strike_refractory: f64,
    #[serde(rename = "toe_off_torque_threshold_nm")]
    pub toe_off_torque_threshold: f64,
    /// Loading spring as piecewise-linear segments (stiffest active wins).
    pub loading_segments: Vec<ImpedanceParams>,
    pub unloading_params: ImpedanceParams,
    /// Stance dorsiflexion excursion used for the net-work check.
    #[serde(rename = "nominal_dorsiflexion_rad")]
    pub nominal_dorsiflexion: f64,
    /// PF position target in swing; negative is dorsiflexed.
    #[serde(rename = "swing_toe_lift_angle_rad")]
    pub swing_toe_lift_angle: f64,
    #[serde(rename = "swing_translation_center_m")]
    pub swing_translation_center: f64,
    #[serde(rename = "trans_anterior_target_m")]
    pub trans_anterior_target: f64,
    #[serde(rename = "trans_posterior_target_m")]
    pub trans_posterior_target: f64,
    /// Optional posterior path over the unloading phase, evenly spaced in
    /// phase progress. Empty selects the linear ramp.
    #[serde(rename = "trans_unloading_profile_m", default)]
    pub trans_unloading_profile: Vec<f64>,
    /// Motor rad/s per N of tension error; kd in rad per N.
    pub torque_gains: PdGains,
    /// PF motor rad/s per motor rad of position error.
    pub position_gains: PdGains,
    /// Translation motor rad/s per m of stage position error.
    pub trans_position_gains: PdGains,
    pub derivative_filter_hz: f64,
    /// Fraction of the cable pay-out rate implied by the filtered ankle
    /// velocity that is fed forward to the PF motor under torque control.
    pub kinematic_feedforward: f64,
    pub theta_dot_filter_hz: f64,
    #[serde(rename = "velocity_deadband_rad_per_s")]
    pub velocity_deadband: f64,
    #[serde(rename = "min_phase_dwell_s")]
    pub min_phase_dwell: f64,
    #[serde(rename = "standing_timeout_s")]
    pub standing_timeout: f64,
    /// Fraction of the trailing-average stride period after which swing
    /// returns both axes to the start configuration.
    pub reset_fraction: f64,
    #[serde(rename = "nominal_stride_period_s")]
    pub nominal_stride_period: f64,
    #[serde(rename = "nominal_unloading_duration_s")]
    pub nominal_unloading_duration: f64,
    /// A frame arriving later than this many periods trips the fault hold.
    pub frame_gap_periods: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            mode: ControlMode::TwoDoF,
            control_rate_hz: 1000.0,
            jerk_threshold: 3000.0,
            jerk_filter_hz: 200.0,
            heel_strike_refractory: 0.1,
            toe_off_torque_threshold: 10.0,
            loading_segments: vec![ImpedanceParams { k: 200.0, x0: 0.0 }, ImpedanceParams { k: 450.0, x0: 0.08 }],
            unloading_params: ImpedanceParams { k: 245.0, x0: 0.0 },
            nominal_dorsiflexion: 10f64.to_radians(),
            swing_toe_lift_angle: -0.05,
            swing_translation_center: 0.0,
            trans_anterior_target: 0.05,
            trans_posterior_target: -0.03,
            trans_unloading_profile: Vec::new(),
            torque_gains: PdGains { kp: 3.0, kd: 0.0 },
            position_gains: PdGains { kp: 30.0, kd: 0.0 },
            trans_position_gains: PdGains { kp: 76_000.0, kd: 0.0 },
            derivative_filter_hz: 25.0,
            kinematic_feedforward: 1.0,
            theta_dot_filter_hz: 8.0,
            velocity_deadband: 0.05,
            min_phase_dwell: 0.02,
            standing_timeout: 2.0,
            reset_fraction: 0.9,
            nominal_stride_period: 1.1,
            nominal_unloading_duration: 0.2,
            frame_gap_periods: 3.0,
        }
    }
}

impl ControllerConfig {
    pub fn period(&self) -> f64 {
        1.0 / self.control_rate_hz
    }

    pub fn loading_torque(&self, x: f64) -> f64 {
        segmented_stiffness_law(x, &self.loading_segments)
    }

    pub fn unloading_torque(&self, x: f64) -> f64 {
        stiffness_law(x, &self.unloading_params)
    }

    /// Work the stance loop returns over the nominal excursion: energy released
    /// by the unloading spring minus energy stored by the loading spring, by
    /// composite Simpson quadrature from neutral to peak dorsiflexion.
    pub fn net_stance_work(&self) -> f64 {
        let n = 2000;
        let h = self.nominal_dorsiflexion / n as f64;
        let f = |x: f64| self.unloading_torque(x) - self.loading_torque(x);
        let mut sum = f(0.0) + f(self.nominal_dorsiflexion);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            sum += w * f(i as f64 * h);
        }
        sum * h / 3.0
    }

    /// Every violated invariant, checked against the plant's joint limits.
    pub fn violations(&self, plant: &PlantConfig) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut positive = |key: &str, v: f64| {
            if !(v.is_finite() && v > 0.0) {
                out.push(Violation::new(key, format!("must be strictly positive (got {v})")));
            }
        };
        positive("control_rate_hz", self.control_rate_hz);
        positive("jerk_threshold_m_per_s3", self.jerk_threshold);
        positive("jerk_filter_hz", self.jerk_filter_hz);
        positive("toe_off_torque_threshold_nm", self.toe_off_torque_threshold);
        positive("nominal_dorsiflexion_rad", self.nominal_dorsiflexion);
        positive("derivative_filter_hz", self.derivative_filter_hz);
        positive("theta_dot_filter_hz", self.theta_dot_filter_hz);
        positive("nominal_stride_period_s", self.nominal_stride_period);
        positive("nominal_unloading_duration_s", self.nominal_unloading_duration);
        positive("frame_gap_periods", self.frame_gap_periods);

        let mut non_negative = |key: &str, v: f64| {
            if !(v.is_finite() && v >= 0.0) {
                out.push(Violation::new(key, format!("must be non-negative (got {v})")));
            }
        };
        non_negative("heel_strike_refractory_s", self.heel_strike_refractory);
        non_negative("velocity_deadband_rad_per_s", self.velocity_deadband);
        non_negative("min_phase_dwell_s", self.min_phase_dwell);
        non_negative("standing_timeout_s", self.standing_timeout);
        non_negative("kinematic_feedforward", self.kinematic_feedforward);
        for (name, g) in [
            ("torque_gains", self.torque_gains),
            ("position_gains", self.position_gains),
            ("trans_position_gains", self.trans_position_gains),
        ] {
            non_negative(&format!("{name}.kp"), g.kp);
            non_negative(&format!("{name}.kd"), g.kd);
        }
        for (i, p) in self.loading_segments.iter().enumerate() {
            non_negative(&format!("loading_segments[{i}].k_nm_per_rad"), p.k);
        }
        non_negative("unloading_params.k_nm_per_rad", self.unloading_params.k);
        for (i, p) in self.loading_segments.iter().enumerate() {
            if !p.x0.is_finite() {
                out.push(Violation::new(format!("loading_segments[{i}].x0_rad"), "must be finite"));
            }
        }
        if !self.unloading_params.x0.is_finite() {
            out.push(Violation::new("unloading_params.x0_rad", "must be finite"));
        }
        if self.loading_segments.is_empty() {
            out.push(Violation::new("loading_segments", "needs at least one segment"));
        }
        if !(self.reset_fraction > 0.0 && self.reset_fraction < 1.0) {
            out.push(Violation::new(
                "reset_fraction",
                format!("must lie in (0, 1) (got {})", self.reset_fraction),
            ));
        }

        let [dlo, dhi] = plant.flexion_limits;
        let flex = [("swing_toe_lift_angle_rad", self.swing_toe_lift_angle)];
        for (key, v) in flex {
            if !(v >= dlo && v <= dhi) {
                out.push(Violation::new(key, format!("target {v} rad outside joint limits [{dlo}, {dhi}]")));
            }
        }
        if !(self.nominal_dorsiflexion <= -dlo) {
            out.push(Violation::new(
                "nominal_dorsiflexion_rad",
                format!("excursion {} rad exceeds the dorsiflexion limit {}", self.nominal_dorsiflexion, -dlo),
            ));
        }
        let [slo, shi] = plant.translation_limits;
        let mut trans = vec![
            ("swing_translation_center_m".to_string(), self.swing_translation_center),
            ("trans_anterior_target_m".to_string(), self.trans_anterior_target),
            ("trans_posterior_target_m".to_string(), self.trans_posterior_target),
        ];
        trans.extend(
            self.trans_unloading_profile
                .iter()
                .enumerate()
                .map(|(i, v)| (format!("trans_unloading_profile_m[{i}]"), *v)),
        );
        for (key, v) in trans {
            if !(v >= slo && v <= shi) {
                out.push(Violation::new(key, format!("target {v} m outside joint limits [{slo}, {shi}]")));
            }
        }
        if self.trans_unloading_profile.len() == 1 {
            out.push(Violation::new("trans_unloading_profile_m", "needs at least two points"));
        }

        if out.is_empty() {
            let w = self.net_stance_work();
            if !(w > 0.0) {
                out.push(Violation::new(
                    "unloading_params",
                    format!(
                        "net-positive work: unloading spring must release more energy than loading stores over the nominal excursion (net {w:.4} J)"
                    ),
                ));
            }
        }

        let steps = 1.0 / (self.control_rate_hz * plant.timestep);
        if !(steps >= 1.0 - 1e-9 && (steps - steps.round()).abs() < 1e-6) {
            out.push(Violation::new(
                "control_rate_hz",
                format!("control period must be a whole number of plant steps (got {steps:.4})"),
            ));
        }
        out
    }

    pub fn validate(&self, plant: &PlantConfig) -> Result<()> {
        let v = self.violations(plant);
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Invalid(v))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let plant = PlantConfig::default();
        let cfg = ControllerConfig::default();
        assert!(cfg.violations(&plant).is_empty(), "{:?}", cfg.violations(&plant));
    }

    #[test]
    fn net_work_matches_closed_form() {
        let cfg = ControllerConfig::default();
        let xn = cfg.nominal_dorsiflexion;
        // Loading: 200 x up to the knee where 200 x = 450 (x - 0.08), then 450 (x - 0.08).
        let knee = 450.0 * 0.08 / 250.0;
        let stored = 100.0 * knee * knee + 225.0 * ((xn - 0.08f64).powi(2) - (knee - 0.08f64).powi(2));
        let released = 122.5 * xn * xn;
        assert!((cfg.net_stance_work() - (released - stored)).abs() < 1e-6);
    }

    #[test]
    fn weak_unloading_spring_is_named() {
        let plant = PlantConfig::default();
        let cfg = ControllerConfig {
            unloading_params: ImpedanceParams { k: 100.0, x0: 0.0 },
            ..ControllerConfig::default()
        };
        let v = cfg.violations(&plant);
        assert!(v.iter().any(|v| v.message.contains("net-positive work")));
    }

    #[test]
    fn out_of_range_targets_rejected() {
        let plant = PlantConfig::default();
        let cfg = ControllerConfig {
            trans_anterior_target: 0.08,
            ..ControllerConfig::default()
        };
        assert!(cfg.violations(&plant).iter().any(|v| v.key == "trans_anterior_target_m"));
    }
}
