use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::transmission::{pf_tension_at, trans_forces_at};
use super::{ExternalLoad, PlantConfig, PlantState};

/// Output joint encoder: 1024 counts per revolution.
pub const THETA_RESOLUTION: f64 = 2.0 * std::f64::consts::PI / 1024.0;
/// Linear encoder on the translation stage.
pub const STAGE_RESOLUTION: f64 = 20.0e-6;
/// Motor encoders: 512 counts per revolution.
pub const MOTOR_RESOLUTION: f64 = 2.0 * std::f64::consts::PI / 512.0;
/// Accelerometer axes; x points in the walking direction, z up.
pub const ACCEL_AXES: usize = 3;

/// Everything the controller is allowed to see in one control period.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SensorFrame {
    pub theta_meas: f64,
    pub s_meas: f64,
    pub motor_pf_pos_meas: f64,
    pub motor_trans_pos_meas: f64,
    pub accel_meas: [f64; ACCEL_AXES],
    /// Deflection-based plantarflexion torque estimate.
    pub tau_pf_est: f64,
    /// Deflection-based net stage force estimate, anterior positive.
    pub f_trans_est: f64,
    pub time: f64,
}

/// Nearest multiple of `resolution`.
pub fn quantize(x: f64, resolution: f64) -> f64 {
    (x / resolution).round() * resolution
}

/// Samples every sensor at the current state. Accelerometer noise is drawn
/// from a stream seeded only by `noise_seed`.
pub fn sample_sensors(state: &PlantState, ext: &ExternalLoad, cfg: &PlantConfig, noise_seed: u64) -> SensorFrame {
    let mut accel_meas = ext.accel_truth;
    if cfg.accel_noise_std > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
        let normal = Normal::new(0.0, cfg.accel_noise_std).expect("validated noise std");
        for a in &mut accel_meas {
            *a += normal.sample(&mut rng);
        }
    }
    // The deflection measurement sees the spring tension on the motor side
    // of the sheath; sheath friction between spring and foot is not observed.
    let tension = pf_tension_at(state.theta, state.motor_pf_pos, cfg);
    SensorFrame {
        theta_meas: quantize(state.theta, THETA_RESOLUTION),
        s_meas: quantize(state.s, STAGE_RESOLUTION),
        motor_pf_pos_meas: quantize(state.motor_pf_pos, MOTOR_RESOLUTION),
        motor_trans_pos_meas: quantize(state.motor_trans_pos, MOTOR_RESOLUTION),
        accel_meas,
        tau_pf_est: tension * cfg.pf_lever_geometry.arm(state.theta),
        f_trans_est: trans_forces_at(state.s, state.motor_trans_pos, cfg).net(),
        time: state.time,
    }
}

/// Mixes a run seed with a step index into an independent stream seed.
pub(crate) fn stream_seed(seed: u64, step: u64) -> u64 {
    // SplitMix64 finaliser.
    let mut z = seed ^ step.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_count_of_flexion() {
        let cfg = PlantConfig::default();
        let state = PlantState {
            theta: 0.351f64.to_radians(),
            ..PlantState::default()
        };
        let f = sample_sensors(&state, &ExternalLoad::default(), &cfg, 1);
        assert_eq!(f.theta_meas, THETA_RESOLUTION);
    }

    #[test]
    fn zero_deflection_reads_zero_torque() {
        let cfg = PlantConfig::default();
        let state = PlantState::taut_at(0.1, 0.0, &cfg);
        let f = sample_sensors(&state, &ExternalLoad::default(), &cfg, 1);
        assert_eq!(f.tau_pf_est, 0.0);
        assert_eq!(f.f_trans_est, 0.0);
    }

    #[test]
    fn same_seed_same_frame() {
        let cfg = PlantConfig::default();
        let state = PlantState::taut_at(0.05, 0.01, &cfg);
        let ext = ExternalLoad::default();
        assert_eq!(sample_sensors(&state, &ext, &cfg, 42), sample_sensors(&state, &ext, &cfg, 42));
        assert_ne!(
            sample_sensors(&state, &ext, &cfg, 42).accel_meas,
            sample_sensors(&state, &ext, &cfg, 43).accel_meas
        );
    }

    #[test]
    fn stream_seeds_differ() {
        let a: Vec<u64> = (0..100).map(|i| stream_seed(7, i)).collect();
        let mut b = a.clone();
        b.sort_unstable();
        b.dedup();
        assert_eq!(a.len(), b.len());
    }
}
