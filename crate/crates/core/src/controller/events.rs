//! Gait-event detection from the accelerometer and the torque estimate.

use super::laws::LowPass;

/// Heel strike: upward crossing of the low-passed jerk of the acceleration
/// magnitude, followed by a refractory period.
#[derive(Debug, Clone, Copy)]
pub struct HeelStrikeDetector {
    threshold: f64,
    refractory: f64,
    dt: f64,
    filter: LowPass,
    prev_magnitude: Option<f64>,
    samples: usize,
    above: bool,
    last_event: Option<f64>,
}

impl HeelStrikeDetector {
    pub fn new(threshold: f64, cutoff_hz: f64, refractory: f64, dt: f64) -> Self {
        Self {
            threshold,
            refractory,
            dt,
            filter: LowPass::new(cutoff_hz, dt),
            prev_magnitude: None,
            samples: 0,
            above: false,
            last_event: None,
        }
    }

    /// Feeds one accelerometer sample; returns true on a heel strike.
    pub fn push(&mut self, accel: [f64; 3], time: f64) -> bool {
        let magnitude = accel.iter().map(|a| a * a).sum::<f64>().sqrt();
        self.samples += 1;
        let raw = match self.prev_magnitude.replace(magnitude) {
            Some(prev) => (magnitude - prev) / self.dt,
            None => 0.0,
        };
        let jerk = self.filter.update_from_zero(raw);
        if self.samples < 3 {
            return false;
        }
        let was_above = self.above;
        self.above = jerk > self.threshold;
        if !self.above || was_above {
            return false;
        }
        if let Some(last) = self.last_event {
            if time - last < self.refractory {
                return false;
            }
        }
        self.last_event = Some(time);
        true
    }

    pub fn jerk(&self) -> f64 {
        self.filter.value().unwrap_or(0.0)
    }
}

/// Toe-off: the torque estimate falls through the threshold during stance.
#[derive(Debug, Clone, Copy, Default)]
pub struct ToeOffDetector {
    prev: Option<f64>,
}

impl ToeOffDetector {
    pub fn push(&mut self, tau: f64, threshold: f64, in_stance: bool) -> bool {
        let fired = matches!(self.prev, Some(p) if p >= threshold && tau < threshold);
        self.prev = Some(tau);
        fired && in_stance
    }
}

/// Heel-strike indices over a recorded accelerometer stream.
pub fn detect_heel_strikes(
    accel: &[[f64; 3]],
    dt: f64,
    threshold: f64,
    cutoff_hz: f64,
    refractory: f64,
) -> Vec<usize> {
    let mut det = HeelStrikeDetector::new(threshold, cutoff_hz, refractory, dt);
    accel
        .iter()
        .enumerate()
        .filter_map(|(i, a)| det.push(*a, i as f64 * dt).then_some(i))
        .collect()
}

/// First toe-off index in a recorded torque stream, all samples in stance.
pub fn detect_toe_off(tau: &[f64], threshold: f64) -> Option<usize> {
    let mut det = ToeOffDetector::default();
    tau.iter().position(|t| det.push(*t, threshold, true))
}

#[cfg(test)]
mod tests {
    use super::*;

    const DT: f64 = 0.001;

    fn detect(accel: &[[f64; 3]]) -> Vec<usize> {
        detect_heel_strikes(accel, DT, 5000.0, 200.0, 0.1)
    }

    #[test]
    fn constant_stream_is_quiet() {
        assert!(detect(&vec![[0.0, 0.0, 9.81]; 500]).is_empty());
    }

    #[test]
    fn step_of_ten_in_one_sample() {
        let mut a = vec![[0.0, 0.0, 9.81]; 50];
        for s in a.iter_mut().skip(20) {
            s[2] += 10.0;
        }
        // Filtered jerk at the step: alpha * 10 / dt.
        let rc = 1.0 / (2.0 * std::f64::consts::PI * 200.0);
        assert!(DT / (rc + DT) * 10.0 / DT > 5000.0);
        assert_eq!(detect(&a), vec![20]);
    }

    #[test]
    fn refractory_merges_close_spikes() {
        let mut a = vec![[0.0, 0.0, 9.81]; 300];
        for k in [50usize, 70] {
            a[k][2] += 30.0;
        }
        assert_eq!(detect(&a), vec![50]);
        let mut b = vec![[0.0, 0.0, 9.81]; 400];
        for k in [50usize, 200] {
            b[k][2] += 30.0;
        }
        assert_eq!(detect(&b), vec![50, 200]);
    }

    #[test]
    fn too_few_samples() {
        assert!(detect(&[[0.0; 3], [0.0, 0.0, 100.0]]).is_empty());
    }

    #[test]
    fn toe_off_on_ramp() {
        let tau: Vec<f64> = (0..=40).rev().map(f64::from).collect();
        let idx = detect_toe_off(&tau, 10.0).unwrap();
        assert_eq!(tau[idx], 9.0);
        assert!(detect_toe_off(&[30.0; 20], 10.0).is_none());
    }

    #[test]
    fn toe_off_gated_outside_stance() {
        let mut det = ToeOffDetector::default();
        assert!(!det.push(20.0, 10.0, false));
        assert!(!det.push(5.0, 10.0, false));
    }
}
