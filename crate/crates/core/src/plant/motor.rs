use serde::{Deserialize, Serialize};

/// Operating envelope of one motor and its driver, referred to the motor shaft
/// at the bench supply voltage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotorLimits {
    #[serde(rename = "max_velocity_rad_per_s")]
    pub max_velocity: f64,
    /// Stall torque: the end of the linear torque-speed line.
    #[serde(rename = "max_torque_nm")]
    pub max_torque: f64,
    #[serde(rename = "max_power_w")]
    pub max_power: f64,
    /// Intercept of the linear torque-speed line.
    #[serde(rename = "no_load_velocity_rad_per_s")]
    pub no_load_velocity: f64,
}

impl MotorLimits {
    /// Highest speed the motor can hold against a resisting torque.
    pub fn speed_envelope(&self, resisting_torque: f64) -> f64 {
        if resisting_torque <= 0.0 {
            return self.max_velocity;
        }
        if resisting_torque >= self.max_torque {
            return 0.0;
        }
        let line = self.no_load_velocity * (1.0 - resisting_torque / self.max_torque);
        self.max_velocity.min(self.max_power / resisting_torque).min(line)
    }
}

/// Velocity the driver actually delivers for `vel_cmd` while the load exerts
/// `load_torque` (positive when it opposes positive rotation).
pub fn saturate_motor(vel_cmd: f64, load_torque: f64, limits: &MotorLimits) -> f64 {
    if vel_cmd == 0.0 || !vel_cmd.is_finite() {
        return 0.0;
    }
    let resisting = load_torque * vel_cmd.signum();
    let bound = limits.speed_envelope(resisting);
    vel_cmd.clamp(-bound, bound)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn limits() -> MotorLimits {
        MotorLimits {
            max_velocity: 200.0,
            max_torque: 1.0,
            max_power: 100.0,
            no_load_velocity: 1000.0,
        }
    }

    #[test]
    fn identity_inside_envelope() {
        assert_eq!(saturate_motor(50.0, 0.0, &limits()), 50.0);
        assert_eq!(saturate_motor(-120.0, 0.1, &limits()), -120.0);
    }

    #[test]
    fn clamps_velocity_power_and_stall() {
        let l = limits();
        assert_eq!(saturate_motor(500.0, 0.0, &l), 200.0);
        assert!((saturate_motor(500.0, 0.8, &l) - 125.0).abs() < 1e-12);
        // Near stall the torque-speed line binds.
        assert!((saturate_motor(500.0, 0.95, &l) - 50.0).abs() < 1e-9);
        assert_eq!(saturate_motor(500.0, 1.0, &l), 0.0);
        assert_eq!(saturate_motor(500.0, 3.0, &l), 0.0);
    }

    #[test]
    fn assisting_load_only_speed_limited() {
        let l = limits();
        assert_eq!(saturate_motor(-500.0, 5.0, &l), -200.0);
    }

    #[test]
    fn power_never_exceeds_limit() {
        let l = limits();
        for i in 0..200 {
            let tau = i as f64 * 0.01;
            let w = saturate_motor(1e6, tau, &l);
            assert!(w * tau <= l.max_power + 1e-9);
            assert!(w <= l.max_velocity);
        }
    }
}
