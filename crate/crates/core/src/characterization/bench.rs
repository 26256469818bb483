//! Bench protocols run against the simulated plant.

use serde::{Deserialize, Serialize};

use crate::controller::{torque_to_tension, ControllerConfig, PdLoop, MOMENT_ARM_FLOOR};
use crate::error::{Error, Result};
use crate::plant::{
    pf_motor_pos_for_taut, sample_sensors, step_dynamics, Coupling, ExternalLoad, MotorVelocityCommand, PlantConfig,
    PlantState, SensorFrame,
};
use crate::plant::stream_seed;

use super::frf::{estimate_frf, FrequencyResponse};
use super::signals::{log_chirp, step_metrics, SquareWave, StepMetrics};

/// A sampled system driven by a scalar reference.
///
/// `step` returns the output measured at the start of the period and then
/// applies `reference` for one period, so even an ideal system lags one sample.
pub trait SystemUnderTest {
    fn period(&self) -> f64;
    fn step(&mut self, reference: f64) -> Result<f64>;
    /// Whether an actuator limit has bound at any point so far.
    fn saturated(&self) -> bool {
        false
    }
}

/// Unit-gain system whose output is the previous reference.
#[derive(Debug, Clone)]
pub struct PassThrough {
    dt: f64,
    last: f64,
}

impl PassThrough {
    pub fn new(dt: f64, initial: f64) -> Self {
        Self { dt, last: initial }
    }
}

impl SystemUnderTest for PassThrough {
    fn period(&self) -> f64 {
        self.dt
    }

    fn step(&mut self, reference: f64) -> Result<f64> {
        Ok(std::mem::replace(&mut self.last, reference))
    }
}

/// Which actuated coordinate a bench protocol exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchAxis {
    Plantarflexion,
    Translation,
}

/// Plant plus fixture, advanced at the control period.
#[derive(Debug, Clone)]
struct Rig {
    plant: PlantConfig,
    state: PlantState,
    ext: ExternalLoad,
    substeps: usize,
    seed: u64,
    steps: u64,
    saturated: bool,
}

impl Rig {
    fn new(plant: &PlantConfig, state: PlantState, ext: ExternalLoad, control_dt: f64, seed: u64) -> Self {
        Self {
            plant: plant.clone(),
            state,
            ext,
            substeps: ((control_dt / plant.timestep).round() as usize).max(1),
            seed,
            steps: 0,
            saturated: false,
        }
    }

    fn sense(&self) -> SensorFrame {
        sample_sensors(&self.state, &self.ext, &self.plant, stream_seed(self.seed, self.steps))
    }

    fn advance(&mut self, cmd: MotorVelocityCommand) -> Result<()> {
        for _ in 0..self.substeps {
            self.state = step_dynamics(&self.state, &cmd, &self.ext, &self.plant)?;
            self.steps += 1;
            let slack = 1e-9 * (1.0 + cmd.pf_vel.abs() + cmd.trans_vel.abs());
            if (self.state.motor_pf_vel - cmd.pf_vel).abs() > slack
                || (self.state.motor_trans_vel - cmd.trans_vel).abs() > slack
            {
                self.saturated = true;
            }
        }
        Ok(())
    }
}

/// Torque loop on a locked ankle; reference and output in N*m.
#[derive(Debug, Clone)]
pub struct TorqueBench {
    rig: Rig,
    pd: PdLoop,
    dt: f64,
}

impl TorqueBench {
    /// Ankle locked at `theta_lock` with the cable just taut.
    pub fn new(plant: &PlantConfig, ctrl: &ControllerConfig, theta_lock: f64, seed: u64) -> Self {
        let dt = ctrl.period();
        let state = PlantState::taut_at(theta_lock, 0.0, plant);
        let ext = ExternalLoad {
            ankle_coupling: Coupling::Locked,
            stage_coupling: Coupling::Locked,
            ..ExternalLoad::default()
        };
        Self {
            rig: Rig::new(plant, state, ext, dt, seed),
            pd: PdLoop::new(ctrl.torque_gains, dt, ctrl.derivative_filter_hz),
            dt,
        }
    }

    pub fn state(&self) -> &PlantState {
        &self.rig.state
    }
}

impl SystemUnderTest for TorqueBench {
    fn period(&self) -> f64 {
        self.dt
    }

    fn step(&mut self, reference: f64) -> Result<f64> {
        let frame = self.rig.sense();
        let geom = &self.rig.plant.pf_lever_geometry;
        let tension_des = torque_to_tension(reference, frame.theta_meas, geom).tension;
        let arm = geom.arm(frame.theta_meas).max(MOMENT_ARM_FLOOR);
        let pf_vel = self.pd.update(tension_des - frame.tau_pf_est / arm);
        self.rig.advance(MotorVelocityCommand { pf_vel, trans_vel: 0.0 })?;
        Ok(frame.tau_pf_est)
    }

    fn saturated(&self) -> bool {
        self.rig.saturated
    }
}

/// Stage position loop with the stage free and the ankle locked; metres.
#[derive(Debug, Clone)]
pub struct TranslationBench {
    rig: Rig,
    pd: PdLoop,
    dt: f64,
}

impl TranslationBench {
    pub fn new(plant: &PlantConfig, ctrl: &ControllerConfig, seed: u64) -> Self {
        let dt = ctrl.period();
        let state = PlantState::taut_at(0.0, 0.0, plant);
        let ext = ExternalLoad {
            ankle_coupling: Coupling::Locked,
            ..ExternalLoad::default()
        };
        Self {
            rig: Rig::new(plant, state, ext, dt, seed),
            pd: PdLoop::new(ctrl.trans_position_gains, dt, ctrl.derivative_filter_hz),
            dt,
        }
    }

    pub fn state(&self) -> &PlantState {
        &self.rig.state
    }
}

impl SystemUnderTest for TranslationBench {
    fn period(&self) -> f64 {
        self.dt
    }

    fn step(&mut self, reference: f64) -> Result<f64> {
        let frame = self.rig.sense();
        let trans_vel = self.pd.update(reference - frame.s_meas);
        self.rig.advance(MotorVelocityCommand { pf_vel: 0.0, trans_vel })?;
        Ok(frame.s_meas)
    }

    fn saturated(&self) -> bool {
        self.rig.saturated
    }
}

/// Recorded square-wave run.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRun {
    pub dt: f64,
    pub reference: Vec<f64>,
    pub measured: Vec<f64>,
    /// Absent when the response never settled; see `diagnostic`.
    pub metrics: Option<StepMetrics>,
    pub diagnostic: Option<String>,
    pub saturated: bool,
}

pub fn run_step_test(sut: &mut dyn SystemUnderTest, wave: &SquareWave) -> Result<StepRun> {
    let dt = sut.period();
    let n = (wave.period / dt).round() as usize * wave.cycles;
    let mut reference = Vec::with_capacity(n);
    let mut measured = Vec::with_capacity(n);
    for k in 0..n {
        let r = wave.value(k as f64 * dt);
        measured.push(sut.step(r)?);
        reference.push(r);
    }
    let (metrics, diagnostic) = match step_metrics(&measured, dt, wave) {
        Ok(m) => (Some(m), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(StepRun {
        dt,
        reference,
        measured,
        metrics,
        diagnostic,
        saturated: sut.saturated(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChirpSpec {
    #[serde(rename = "f0_hz")]
    pub f0: f64,
    #[serde(rename = "f1_hz")]
    pub f1: f64,
    #[serde(rename = "duration_s")]
    pub duration: f64,
    pub bias: f64,
    pub amplitude: f64,
    /// Time spent at the bias before the sweep starts; not analysed.
    #[serde(rename = "lead_in_s", default = "default_lead_in")]
    pub lead_in: f64,
}

fn default_lead_in() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChirpRun {
    pub dt: f64,
    pub reference: Vec<f64>,
    pub measured: Vec<f64>,
    pub frf: FrequencyResponse,
    /// An actuator limit bound during the sweep; the estimate is still returned.
    pub saturated: bool,
}

pub fn run_chirp_test(sut: &mut dyn SystemUnderTest, spec: &ChirpSpec) -> Result<ChirpRun> {
    let dt = sut.period();
    let lead = (spec.lead_in / dt).round() as usize;
    for _ in 0..lead {
        sut.step(spec.bias)?;
    }
    let n = (spec.duration / dt).round() as usize + 1;
    let mut reference = Vec::with_capacity(n);
    let mut measured = Vec::with_capacity(n);
    for k in 0..n {
        let t = (k as f64 * dt).min(spec.duration);
        let r = spec.bias + spec.amplitude * log_chirp(spec.f0, spec.f1, spec.duration, t)?;
        measured.push(sut.step(r)?);
        reference.push(r);
    }
    let frf = estimate_frf(&reference, &measured, 1.0 / dt, (spec.f0, spec.f1))?;
    Ok(ChirpRun {
        dt,
        reference,
        measured,
        frf,
        saturated: sut.saturated(),
    })
}

/// Fixture and drive for a stall sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StallSetup {
    pub axis: BenchAxis,
    /// N*m/rad for the ankle, N/m for the stage.
    pub spring_rate: f64,
    /// Output coordinate where the fixture spring is unloaded.
    pub start: f64,
    #[serde(rename = "duration_s")]
    pub duration: f64,
    /// Window for differentiating the motor encoder into velocity.
    #[serde(rename = "velocity_window_s")]
    pub velocity_window: f64,
}

impl StallSetup {
    pub fn default_for(axis: BenchAxis) -> Self {
        match axis {
            BenchAxis::Plantarflexion => Self {
                axis,
                spring_rate: 400.0,
                start: -0.2,
                duration: 2.0,
                velocity_window: 0.02,
            },
            BenchAxis::Translation => Self {
                axis,
                spring_rate: 8000.0,
                start: -0.04,
                duration: 2.0,
                velocity_window: 0.02,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StallSweepReport {
    pub peak_load: f64,
    pub peak_velocity: f64,
    pub peak_power: f64,
    /// `(time, load, velocity)` samples.
    pub load_velocity_curve: Vec<(f64, f64, f64)>,
}

/// Drives one axis with a command beyond its capability into a spring load.
///
/// Load is the fixture load-cell reading. Velocity is the motor encoder rate
/// referred to the output through the transmission (gear ratio and, for the
/// ankle, the moment arm at the measured angle), so it is the velocity the
/// actuator delivers into the cable rather than the fixture deflection rate.
pub fn run_stall_sweep(plant: &PlantConfig, setup: &StallSetup) -> Result<StallSweepReport> {
    if !(setup.spring_rate > 0.0 && setup.spring_rate.is_finite()) {
        return Err(Error::Domain(format!("spring rate must be positive (got {})", setup.spring_rate)));
    }
    let dt = plant.timestep;
    let fixture = Coupling::spring(setup.spring_rate, setup.start);
    let (mut state, ext, cmd) = match setup.axis {
        BenchAxis::Plantarflexion => (
            PlantState::taut_at(setup.start, 0.0, plant),
            ExternalLoad {
                ankle_coupling: fixture,
                stage_coupling: Coupling::Locked,
                ..ExternalLoad::default()
            },
            MotorVelocityCommand {
                pf_vel: 10.0 * plant.pf_motor.max_velocity,
                trans_vel: 0.0,
            },
        ),
        BenchAxis::Translation => (
            PlantState::taut_at(0.0, setup.start, plant),
            ExternalLoad {
                ankle_coupling: Coupling::Locked,
                stage_coupling: fixture,
                ..ExternalLoad::default()
            },
            MotorVelocityCommand {
                pf_vel: 0.0,
                trans_vel: 10.0 * plant.trans_motor.max_velocity,
            },
        ),
    };
    let n = (setup.duration / dt).round() as usize;
    let half = ((setup.velocity_window / dt / 2.0).round() as usize).max(1);
    let mut samples = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let frame = sample_sensors(&state, &ext, plant, 0);
        samples.push(match setup.axis {
            BenchAxis::Plantarflexion => (
                setup.spring_rate * (state.theta - setup.start),
                frame.motor_pf_pos_meas,
                plant.pf_gear_ratio / plant.pf_lever_geometry.arm(frame.theta_meas).max(MOMENT_ARM_FLOOR),
            ),
            BenchAxis::Translation => (
                setup.spring_rate * (state.s - setup.start),
                frame.motor_trans_pos_meas,
                plant.trans_gear_ratio,
            ),
        });
        if k < n {
            state = step_dynamics(&state, &cmd, &ext, plant)?;
        }
    }
    // Centred difference so the velocity is aligned in time with the load.
    let curve: Vec<(f64, f64, f64)> = samples
        .iter()
        .enumerate()
        .map(|(k, &(load, _, ratio))| {
            let velocity = if k >= half && k + half <= n {
                (samples[k + half].1 - samples[k - half].1) / (2 * half) as f64 / dt * ratio
            } else {
                0.0
            };
            (k as f64 * dt, load, velocity)
        })
        .collect();
    let peak_load = curve.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
    let peak_velocity = curve.iter().map(|c| c.2).fold(f64::NEG_INFINITY, f64::max);
    let peak_power = curve.iter().map(|c| c.1 * c.2).fold(f64::NEG_INFINITY, f64::max);
    Ok(StallSweepReport {
        peak_load,
        peak_velocity,
        peak_power,
        load_velocity_curve: curve,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HysteresisReport {
    pub applied: Vec<f64>,
    pub measured: Vec<f64>,
    pub rms_error: f64,
    /// Signed shoelace area of the closed (applied, measured) polygon.
    pub loop_area: f64,
}

/// Starting flexion angle for the PF weight ladder: cable taut, bands slack.
pub const HYSTERESIS_PF_START: f64 = -0.06;

/// Weight ladder with both motors held still. Loads are dorsiflexing torques
/// (N*m) on the ankle or posterior pulls (N) on the stage; the estimate is the
/// deflection-based reading the controller would see.
pub fn run_hysteresis_test(
    plant: &PlantConfig,
    axis: BenchAxis,
    ladder: &[f64],
    hold_time: f64,
) -> Result<HysteresisReport> {
    if ladder.is_empty() || ladder.iter().zip(ladder.iter().rev()).any(|(a, b)| a != b) {
        return Err(Error::Domain("weight ladder must be symmetric (up then down)".into()));
    }
    if !(hold_time > 0.0) {
        return Err(Error::Domain(format!("hold time must be positive (got {hold_time})")));
    }
    let (mut state, mut ext) = match axis {
        BenchAxis::Plantarflexion => {
            let mut s = PlantState::taut_at(HYSTERESIS_PF_START, 0.0, plant);
            s.motor_pf_pos = pf_motor_pos_for_taut(HYSTERESIS_PF_START, plant);
            (
                s,
                ExternalLoad {
                    stage_coupling: Coupling::Locked,
                    ..ExternalLoad::default()
                },
            )
        }
        BenchAxis::Translation => (
            PlantState::taut_at(0.0, 0.0, plant),
            ExternalLoad {
                ankle_coupling: Coupling::Locked,
                ..ExternalLoad::default()
            },
        ),
    };
    // Each weight is lowered on over the first half of the hold, then left
    // to settle; a dropped weight would stick wherever its overshoot ended.
    let steps = (hold_time / plant.timestep).round() as usize;
    let ramp = (steps / 2).max(1);
    let mut measured = Vec::with_capacity(ladder.len());
    let mut prev = 0.0;
    for (i, &w) in ladder.iter().enumerate() {
        for k in 0..steps {
            let load = prev + (w - prev) * ((k + 1) as f64 / ramp as f64).min(1.0);
            match axis {
                BenchAxis::Plantarflexion => ext.ankle_torque_ext = -load,
                BenchAxis::Translation => ext.ap_force_ext = -load,
            }
            state = step_dynamics(&state, &MotorVelocityCommand::ZERO, &ext, plant)?;
        }
        prev = w;
        let frame = sample_sensors(&state, &ext, plant, stream_seed(0, i as u64));
        measured.push(match axis {
            BenchAxis::Plantarflexion => frame.tau_pf_est,
            BenchAxis::Translation => frame.f_trans_est,
        });
    }
    let n = ladder.len() as f64;
    let rms_error = (ladder
        .iter()
        .zip(&measured)
        .map(|(a, m)| (m - a) * (m - a))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(HysteresisReport {
        rms_error,
        loop_area: shoelace(ladder, &measured),
        applied: ladder.to_vec(),
        measured,
    })
}

/// Standard symmetric ladder from zero to `top` in `rungs` equal steps and back.
pub fn weight_ladder(top: f64, rungs: usize) -> Vec<f64> {
    let up: Vec<f64> = (0..=rungs).map(|i| top * i as f64 / rungs as f64).collect();
    up.iter().chain(up.iter().rev().skip(1)).copied().collect()
}

fn shoelace(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    (0..n)
        .map(|i| {
            let j = (i + 1) % n;
            x[i] * y[j] - x[j] * y[i]
        })
        .sum::<f64>()
        / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pass_through_rises_in_one_period() {
        let wave = SquareWave {
            lo: 0.0,
            hi: 1.0,
            period: 2.0,
            cycles: 3,
        };
        let run = run_step_test(&mut PassThrough::new(0.001, 0.0), &wave).unwrap();
        let m = run.metrics.unwrap();
        assert!((m.rise_time_90 - 0.001).abs() < 1e-12);
        assert!((m.fall_time_90 - 0.001).abs() < 1e-12);
        assert_eq!(m.overshoot, 0.0);
    }

    #[test]
    fn pass_through_chirp_is_flat() {
        let spec = ChirpSpec {
            f0: 0.1,
            f1: 30.0,
            duration: 20.0,
            bias: 0.5,
            amplitude: 0.5,
            lead_in: 0.2,
        };
        let run = run_chirp_test(&mut PassThrough::new(0.001, 0.0), &spec).unwrap();
        assert!(run.frf.magnitude_db.iter().all(|m| m.abs() < 0.1));
        assert!(!run.saturated);
    }

    #[test]
    fn ladder_shape() {
        assert_eq!(weight_ladder(20.0, 2), vec![0.0, 10.0, 20.0, 10.0, 0.0]);
        assert!(run_hysteresis_test(&PlantConfig::default(), BenchAxis::Plantarflexion, &[0.0, 1.0], 0.1).is_err());
    }

    #[test]
    fn shoelace_of_unit_square() {
        assert!((shoelace(&[0.0, 1.0, 1.0, 0.0], &[0.0, 0.0, 1.0, 1.0]) - 1.0).abs() < 1e-15);
    }
}
