use serde::{Deserialize, Serialize};

use crate::plant::LeverGeometry;

/// Virtual torsion spring `T = K (x - x0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImpedanceParams {
    #[serde(rename = "k_nm_per_rad")]
    pub k: f64,
    #[serde(rename = "x0_rad")]
    pub x0: f64,
}

/// Proportional and derivative gains of one low-level loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdGains {
    pub kp: f64,
    pub kd: f64,
}

/// Eq. (1) clamped at zero: the actuator can only plantarflex.
///
/// `x` is the dorsiflexion angle, i.e. `-theta_meas`, so the spring loads as
/// the shank rolls over the foot.
pub fn stiffness_law(x: f64, params: &ImpedanceParams) -> f64 {
    (params.k * (x - params.x0)).max(0.0)
}

/// Piecewise-linear spring made of several segments; the stiffest active
/// segment wins, which gives a convex, stiffening curve.
pub fn segmented_stiffness_law(x: f64, segments: &[ImpedanceParams]) -> f64 {
    segments.iter().map(|p| stiffness_law(x, p)).fold(0.0, f64::max)
}

/// Shortest moment arm the torque loop will divide by.
pub const MOMENT_ARM_FLOOR: f64 = 1.0e-3;

/// Desired cable tension for a desired plantarflexion torque.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TensionCommand {
    pub tension: f64,
    /// The computed arm fell below [`MOMENT_ARM_FLOOR`] and was floored.
    pub arm_saturated: bool,
}

pub fn torque_to_tension(t_des: f64, theta_meas: f64, geom: &LeverGeometry) -> TensionCommand {
    let arm = geom.arm(theta_meas);
    let (arm, arm_saturated) = if arm < MOMENT_ARM_FLOOR {
        (MOMENT_ARM_FLOOR, true)
    } else {
        (arm, false)
    };
    TensionCommand {
        tension: t_des.max(0.0) / arm,
        arm_saturated,
    }
}

/// First-order low-pass with the RC discretisation `a = dt / (RC + dt)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowPass {
    alpha: f64,
    state: Option<f64>,
}

impl LowPass {
    pub fn new(cutoff_hz: f64, dt: f64) -> Self {
        let rc = 1.0 / (2.0 * std::f64::consts::PI * cutoff_hz);
        Self {
            alpha: dt / (rc + dt),
            state: None,
        }
    }

    /// Filter whose first output equals its first input.
    pub fn update(&mut self, x: f64) -> f64 {
        let y = match self.state {
            Some(prev) => prev + self.alpha * (x - prev),
            None => x,
        };
        self.state = Some(y);
        y
    }

    /// Filter that starts from zero, so a step input is smoothed from the start.
    pub fn update_from_zero(&mut self, x: f64) -> f64 {
        let prev = self.state.unwrap_or(0.0);
        let y = prev + self.alpha * (x - prev);
        self.state = Some(y);
        y
    }

    pub fn value(&self) -> Option<f64> {
        self.state
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn reset(&mut self) {
        self.state = None;
    }
}

/// PD loop emitting a motor velocity; the derivative acts on low-passed error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdLoop {
    gains: PdGains,
    dt: f64,
    prev_error: Option<f64>,
    derivative: LowPass,
}

impl PdLoop {
    pub fn new(gains: PdGains, dt: f64, derivative_cutoff_hz: f64) -> Self {
        Self {
            gains,
            dt,
            prev_error: None,
            derivative: LowPass::new(derivative_cutoff_hz, dt),
        }
    }

    pub fn update(&mut self, error: f64) -> f64 {
        let raw = match self.prev_error {
            Some(prev) => (error - prev) / self.dt,
            None => 0.0,
        };
        self.prev_error = Some(error);
        let d = self.derivative.update_from_zero(raw);
        self.gains.kp * error + self.gains.kd * d
    }

    pub fn reset(&mut self) {
        self.prev_error = None;
        self.derivative.reset();
    }
}

/// Torque loop: tension error in N to PF motor velocity in rad/s.
pub fn pd_torque_loop(pd: &mut PdLoop, tension_des: f64, tension_meas: f64) -> f64 {
    pd.update(tension_des - tension_meas)
}

/// Position loop: position error to motor velocity.
pub fn pd_position_loop(pd: &mut PdLoop, target: f64, meas: f64) -> f64 {
    pd.update(target - meas)
}
