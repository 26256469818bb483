use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::plant::{pf_motor_pos_for_taut, MotorVelocityCommand, PlantConfig, SensorFrame};

use super::events::{HeelStrikeDetector, ToeOffDetector};
use super::fsm::{update_fsm, FsmEvents, FsmRules, GaitPhase, PhaseState};
use super::laws::{torque_to_tension, LowPass, PdLoop, MOMENT_ARM_FLOOR};
use super::targets::{phase_targets, PfTarget, TransTarget};
use super::{ControlMode, ControllerConfig};

/// Counters for everything the controller ignored or refused.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub illegal_events: u64,
    pub ignored_events: u64,
    pub arm_saturations: u64,
    pub frame_gaps: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PfControlMode {
    Torque,
    Position,
}

/// Internal state after one control step, for logging.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlTrace {
    pub time: f64,
    pub phase: GaitPhase,
    pub pf_mode: PfControlMode,
    /// Desired plantarflexion torque (zero under position control).
    pub torque_cmd: f64,
    pub tension_cmd: f64,
    /// PF motor position target under position control.
    pub pf_position_target: f64,
    pub trans_target: f64,
    pub theta_dot_filtered: f64,
    pub heel_strike: bool,
    pub toe_off: bool,
    pub fault: bool,
    pub command: MotorVelocityCommand,
}

/// The full controller stack. One instance per plant.
#[derive(Debug, Clone)]
pub struct Controller {
    cfg: ControllerConfig,
    model: PlantConfig,
    rules: FsmRules,
    dt: f64,
    phase: PhaseState,
    heel: HeelStrikeDetector,
    toe: ToeOffDetector,
    theta_dot: LowPass,
    prev_theta: Option<f64>,
    angle_est: Option<(f64, f64)>,
    torque_pd: PdLoop,
    pf_position_pd: PdLoop,
    trans_pd: PdLoop,
    last_time: Option<f64>,
    hold_pf: f64,
    hold_trans: f64,
    last_heel_strike: Option<f64>,
    stride_periods: VecDeque<f64>,
    unloading_start: f64,
    unloading_duration: f64,
    reset_applied: bool,
    diagnostics: Diagnostics,
    trace: Option<ControlTrace>,
}

const STRIDE_WINDOW: usize = 3;
const ANGLE_ALPHA: f64 = 0.2;
const ANGLE_BETA: f64 = 0.02;

impl Controller {
    /// `model` supplies the nominal lever geometry and gear ratios the
    /// controller uses to convert torque to tension and angles to motor positions.
    pub fn new(cfg: ControllerConfig, model: &PlantConfig) -> Self {
        let dt = cfg.period();
        let pd = |g| PdLoop::new(g, dt, cfg.derivative_filter_hz);
        Self {
            rules: FsmRules {
                velocity_deadband: cfg.velocity_deadband,
                min_dwell: cfg.min_phase_dwell,
                standing_timeout: cfg.standing_timeout,
            },
            dt,
            phase: PhaseState::new(GaitPhase::Standing, 0.0),
            heel: HeelStrikeDetector::new(cfg.jerk_threshold, cfg.jerk_filter_hz, cfg.heel_strike_refractory, dt),
            toe: ToeOffDetector::default(),
            theta_dot: LowPass::new(cfg.theta_dot_filter_hz, dt),
            prev_theta: None,
            angle_est: None,
            torque_pd: pd(cfg.torque_gains),
            pf_position_pd: pd(cfg.position_gains),
            trans_pd: pd(cfg.trans_position_gains),
            last_time: None,
            hold_pf: 0.0,
            hold_trans: 0.0,
            last_heel_strike: None,
            stride_periods: VecDeque::with_capacity(STRIDE_WINDOW),
            unloading_start: 0.0,
            unloading_duration: cfg.nominal_unloading_duration,
            reset_applied: false,
            diagnostics: Diagnostics::default(),
            trace: None,
            model: model.clone(),
            cfg,
        }
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.cfg
    }

    pub fn phase(&self) -> GaitPhase {
        self.phase.phase
    }

    pub fn diagnostics(&self) -> Diagnostics {
        self.diagnostics
    }

    /// Trace of the most recent step.
    pub fn trace(&self) -> Option<&ControlTrace> {
        self.trace.as_ref()
    }

    /// Trailing-average stride period, or the nominal one before any stride.
    pub fn stride_period(&self) -> f64 {
        if self.stride_periods.is_empty() {
            self.cfg.nominal_stride_period
        } else {
            self.stride_periods.iter().sum::<f64>() / self.stride_periods.len() as f64
        }
    }

    /// Detection, FSM, targets and low-level loops for one frame.
    pub fn control_step(&mut self, frame: &SensorFrame) -> MotorVelocityCommand {
        let t = frame.time;
        let first = self.last_time.is_none();
        let gap = self
            .last_time
            .is_some_and(|last| t - last > self.cfg.frame_gap_periods * self.dt * (1.0 + 1e-9));
        self.last_time = Some(t);
        if first {
            self.phase.entry_time = t;
            self.hold_pf = frame.motor_pf_pos_meas;
            self.hold_trans = frame.motor_trans_pos_meas;
        }
        if gap {
            self.diagnostics.frame_gaps += 1;
            self.torque_pd.reset();
            self.pf_position_pd.reset();
            self.trans_pd.reset();
            self.prev_theta = None;
            self.angle_est = None;
            self.trace = Some(ControlTrace {
                time: t,
                phase: self.phase.phase,
                pf_mode: PfControlMode::Position,
                torque_cmd: 0.0,
                tension_cmd: 0.0,
                pf_position_target: frame.motor_pf_pos_meas,
                trans_target: frame.s_meas,
                theta_dot_filtered: self.theta_dot.value().unwrap_or(0.0),
                heel_strike: false,
                toe_off: false,
                fault: true,
                command: MotorVelocityCommand::ZERO,
            });
            return MotorVelocityCommand::ZERO;
        }

        let heel_strike = self.heel.push(frame.accel_meas, t);
        let raw_rate = match self.prev_theta.replace(frame.theta_meas) {
            Some(prev) => (frame.theta_meas - prev) / self.dt,
            None => 0.0,
        };
        let theta_dot = self.theta_dot.update_from_zero(raw_rate);
        let toe_off = self.toe.push(
            frame.tau_pf_est,
            self.cfg.toe_off_torque_threshold,
            self.phase.phase.is_stance(),
        );
        let events = FsmEvents { heel_strike, toe_off };
        let before = self.phase.phase;
        let out = update_fsm(self.phase, events, theta_dot, t, &self.rules);
        self.diagnostics.illegal_events += u64::from(out.illegal);
        self.diagnostics.ignored_events += u64::from(out.ignored);
        self.phase = out.state;
        if self.phase.phase != before {
            self.enter(self.phase.phase, before, frame);
        }

        let phase = self.phase.phase;
        let mut targets = phase_targets(phase, self.cfg.mode, &self.cfg);
        if phase == GaitPhase::Swing && self.cfg.mode != ControlMode::StaticPosition {
            let since = self.last_heel_strike.map_or(f64::INFINITY, |h| t - h);
            if !self.reset_applied && since >= self.cfg.reset_fraction * self.stride_period() {
                self.reset_applied = true;
            }
            if self.reset_applied {
                targets.pf = PfTarget::Angle(0.0);
                targets.trans = TransTarget::At(match self.cfg.mode {
                    ControlMode::TwoDoF => self.cfg.swing_translation_center,
                    _ => 0.0,
                });
            }
        }

        let theta_hat = self.track_angle(frame.theta_meas);
        let geom = &self.model.pf_lever_geometry;
        let x = -theta_hat;
        let (pf_mode, torque_cmd) = match targets.pf {
            PfTarget::Loading => (PfControlMode::Torque, self.cfg.loading_torque(x)),
            PfTarget::Unloading => (PfControlMode::Torque, self.cfg.unloading_torque(x)),
            _ => (PfControlMode::Position, 0.0),
        };
        let mut tension_cmd = 0.0;
        let mut pf_position_target = frame.motor_pf_pos_meas;
        let pf_vel = match targets.pf {
            PfTarget::Loading | PfTarget::Unloading => {
                let cmd = torque_to_tension(torque_cmd, theta_hat, geom);
                if cmd.arm_saturated {
                    self.diagnostics.arm_saturations += 1;
                }
                tension_cmd = cmd.tension;
                let arm = geom.arm(theta_hat).max(MOMENT_ARM_FLOOR);
                // Motor position that would hold the commanded tension at a
                // given angle; its rate along the filtered ankle velocity is
                // fed forward.
                let unloading = matches!(targets.pf, PfTarget::Unloading);
                let hold_at = |theta: f64| {
                    let tau = if unloading {
                        self.cfg.unloading_torque(-theta)
                    } else {
                        self.cfg.loading_torque(-theta)
                    };
                    pf_motor_pos_for_taut(theta, &self.model)
                        + torque_to_tension(tau, theta, geom).tension
                            / (self.model.pf_series_stiffness * self.model.pf_gear_ratio)
                };
                let h = 1e-4;
                let slope = (hold_at(theta_hat + h) - hold_at(theta_hat - h)) / (2.0 * h);
                let ff = self.cfg.kinematic_feedforward * slope * self.angle_est.map_or(0.0, |e| e.1);
                self.torque_pd.update(tension_cmd - frame.tau_pf_est / arm) + ff
            }
            PfTarget::Angle(a) => {
                pf_position_target = pf_motor_pos_for_taut(a, &self.model);
                self.pf_position_pd.update(pf_position_target - frame.motor_pf_pos_meas)
            }
            PfTarget::Hold => {
                pf_position_target = self.hold_pf;
                self.pf_position_pd.update(pf_position_target - frame.motor_pf_pos_meas)
            }
        };

        let trans_vel = match targets.trans {
            TransTarget::Hold => {
                // Hold the drum, expressed as stage-equivalent error.
                let err = (self.hold_trans - frame.motor_trans_pos_meas) * self.model.trans_gear_ratio;
                self.trans_pd.update(err)
            }
            target => {
                let s_target = self.translation_target(target, t);
                self.trans_pd.update(s_target - frame.s_meas)
            }
        };
        let trans_target = match targets.trans {
            TransTarget::Hold => self.hold_trans * self.model.trans_gear_ratio,
            target => self.translation_target(target, t),
        };

        let command = MotorVelocityCommand {
            pf_vel,
            trans_vel,
        };
        self.trace = Some(ControlTrace {
            time: t,
            phase,
            pf_mode,
            torque_cmd,
            tension_cmd,
            pf_position_target,
            trans_target,
            theta_dot_filtered: theta_dot,
            heel_strike,
            toe_off,
            fault: false,
            command,
        });
        command
    }

    /// Alpha-beta tracker on the quantized ankle angle.
    fn track_angle(&mut self, meas: f64) -> f64 {
        let (theta, rate) = match self.angle_est {
            None => (meas, 0.0),
            Some((theta, rate)) => {
                let predicted = theta + rate * self.dt;
                let residual = meas - predicted;
                (
                    predicted + ANGLE_ALPHA * residual,
                    rate + ANGLE_BETA * residual / self.dt,
                )
            }
        };
        self.angle_est = Some((theta, rate));
        theta
    }

    fn translation_target(&self, target: TransTarget, t: f64) -> f64 {
        match target {
            TransTarget::At(s) => s,
            TransTarget::Hold => self.hold_trans * self.model.trans_gear_ratio,
            TransTarget::Ramp { from, to } => {
                let progress = ((t - self.unloading_start) / self.unloading_duration).clamp(0.0, 1.0);
                let profile = &self.cfg.trans_unloading_profile;
                if profile.len() >= 2 {
                    let pos = progress * (profile.len() - 1) as f64;
                    let i = (pos.floor() as usize).min(profile.len() - 2);
                    let f = pos - i as f64;
                    profile[i] + f * (profile[i + 1] - profile[i])
                } else {
                    from + (to - from) * progress
                }
            }
        }
    }

    fn enter(&mut self, phase: GaitPhase, from: GaitPhase, frame: &SensorFrame) {
        let t = frame.time;
        match phase {
            GaitPhase::StanceLoading => {
                if from == GaitPhase::Swing {
                    if let Some(prev) = self.last_heel_strike {
                        let period = t - prev;
                        if period > 0.25 * self.cfg.nominal_stride_period && period < 4.0 * self.cfg.nominal_stride_period
                        {
                            if self.stride_periods.len() == STRIDE_WINDOW {
                                self.stride_periods.pop_front();
                            }
                            self.stride_periods.push_back(period);
                        }
                    }
                }
                self.last_heel_strike = Some(t);
                self.reset_applied = false;
                self.torque_pd.reset();
            }
            GaitPhase::StanceUnloading => {
                self.unloading_start = t;
            }
            GaitPhase::Swing => {
                let d = t - self.unloading_start;
                if d > 0.0 {
                    self.unloading_duration = d;
                }
                self.pf_position_pd.reset();
            }
            GaitPhase::Standing => {
                self.hold_pf = frame.motor_pf_pos_meas;
                self.hold_trans = frame.motor_trans_pos_meas;
                self.pf_position_pd.reset();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::{sample_sensors, ExternalLoad, PlantState};

    fn frame_at(theta: f64, t: f64, cfg: &PlantConfig) -> SensorFrame {
        let mut state = PlantState::taut_at(theta, 0.0, cfg);
        state.time = t;
        sample_sensors(&state, &ExternalLoad::default(), &PlantConfig { accel_noise_std: 0.0, ..cfg.clone() }, 0)
    }

    #[test]
    fn standing_at_rest_is_quiet() {
        let plant = PlantConfig::default();
        let mut c = Controller::new(ControllerConfig::default(), &plant);
        for i in 0..500 {
            let cmd = c.control_step(&frame_at(0.0, i as f64 * 0.001, &plant));
            assert!(cmd.pf_vel.abs() < 1e-9 && cmd.trans_vel.abs() < 1e-9);
        }
        assert_eq!(c.phase(), GaitPhase::Standing);
    }

    #[test]
    fn frame_gap_trips_safe_hold() {
        let plant = PlantConfig::default();
        let mut c = Controller::new(ControllerConfig::default(), &plant);
        c.control_step(&frame_at(0.0, 0.0, &plant));
        c.control_step(&frame_at(0.0, 0.001, &plant));
        let cmd = c.control_step(&frame_at(0.0, 0.010, &plant));
        assert_eq!(cmd, MotorVelocityCommand::ZERO);
        assert!(c.trace().unwrap().fault);
        assert_eq!(c.diagnostics().frame_gaps, 1);
        c.control_step(&frame_at(0.0, 0.011, &plant));
        assert!(!c.trace().unwrap().fault);
    }

    #[test]
    fn replay_is_deterministic() {
        let plant = PlantConfig::default();
        let frames: Vec<SensorFrame> = (0..800)
            .map(|i| {
                let t = i as f64 * 0.001;
                let mut f = frame_at(-0.15 * (3.0 * t).sin(), t, &plant);
                if i == 100 {
                    f.accel_meas[2] += 40.0;
                }
                f.tau_pf_est = 30.0 * (3.0 * t).sin().abs();
                f
            })
            .collect();
        let run = || {
            let mut c = Controller::new(ControllerConfig::default(), &plant);
            frames.iter().map(|f| c.control_step(f)).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }
}
