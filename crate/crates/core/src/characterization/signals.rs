use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exponential (logarithmic) sine sweep from `f0` to `f1` over `duration`.
pub fn log_chirp(f0: f64, f1: f64, duration: f64, t: f64) -> Result<f64> {
    Ok(chirp_phase(f0, f1, duration, t)?.sin())
}

/// Swept phase `2 pi f0 D / ln(f1/f0) * (exp(t ln(f1/f0) / D) - 1)`.
pub fn chirp_phase(f0: f64, f1: f64, duration: f64, t: f64) -> Result<f64> {
    if !(f0 > 0.0 && f1 > f0 && f1.is_finite()) {
        return Err(Error::Domain(format!("chirp needs 0 < f0 < f1 (got {f0}, {f1})")));
    }
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(Error::Domain(format!("chirp duration must be positive (got {duration})")));
    }
    if !(t >= 0.0 && t <= duration) {
        return Err(Error::Domain(format!("t = {t} outside [0, {duration}]")));
    }
    let rate = (f1 / f0).ln() / duration;
    Ok(2.0 * PI * f0 * ((rate * t).exp() - 1.0) / rate)
}

/// Instantaneous frequency of [`log_chirp`] in Hz.
pub fn chirp_frequency(f0: f64, f1: f64, duration: f64, t: f64) -> f64 {
    f0 * (t * (f1 / f0).ln() / duration).exp()
}

/// Time from the edge at sample `edge` until the signal first reaches 90% of
/// the way from `from` to `to`. `None` if it never gets there.
pub fn time_to_90(signal: &[f64], dt: f64, edge: usize, from: f64, to: f64) -> Option<f64> {
    let threshold = from + 0.9 * (to - from);
    let dir = (to - from).signum();
    signal
        .iter()
        .enumerate()
        .skip(edge)
        .find(|(_, y)| (**y - threshold) * dir >= 0.0)
        .map(|(k, _)| (k - edge) as f64 * dt)
}

/// 90% rise time of an upward step from `lo` to `hi`.
pub fn rise_time_90(signal: &[f64], dt: f64, edge: usize, lo: f64, hi: f64) -> Option<f64> {
    time_to_90(signal, dt, edge, lo, hi)
}

/// 90% fall time of a downward step from `hi` to `lo`.
pub fn fall_time_90(signal: &[f64], dt: f64, edge: usize, hi: f64, lo: f64) -> Option<f64> {
    time_to_90(signal, dt, edge, hi, lo)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub rise_time_90: f64,
    pub fall_time_90: f64,
    /// Peak excursion past the target as a fraction of the step amplitude.
    pub overshoot: f64,
    /// Mean absolute offset from the target once settled, in output units.
    pub steady_state_error: f64,
}

/// Square-wave reference: high for the first half of each period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SquareWave {
    pub lo: f64,
    pub hi: f64,
    #[serde(rename = "period_s")]
    pub period: f64,
    pub cycles: usize,
}

impl SquareWave {
    pub fn value(&self, t: f64) -> f64 {
        if (t / self.period).fract() < 0.5 {
            self.hi
        } else {
            self.lo
        }
    }
}

/// Steady band: within 2% of the step amplitude.
pub const SETTLE_BAND: f64 = 0.02;
/// The band must hold for this long before each edge.
pub const SETTLE_TIME: f64 = 0.5;

/// Step metrics of a recorded square-wave response sampled at `dt`, starting
/// at the first rising edge. The first cycle is discarded.
pub fn step_metrics(output: &[f64], dt: f64, wave: &SquareWave) -> Result<StepMetrics> {
    let per = (wave.period / dt).round() as usize;
    let half = per / 2;
    let settle = (SETTLE_TIME / dt).round() as usize;
    let amp = wave.hi - wave.lo;
    if wave.cycles < 2 || half <= settle || output.len() < per * wave.cycles {
        return Err(Error::Domain(
            "step test needs at least two cycles with half-periods longer than the settling window".into(),
        ));
    }
    let (mut rise, mut fall, mut over, mut sse) = (0.0, 0.0, 0.0f64, 0.0);
    let mut n = 0.0;
    for c in 1..wave.cycles {
        let up = c * per;
        let down = up + half;
        let hi_seg = &output[up..down];
        let lo_seg = &output[down..up + per];
        for (seg, target, what) in [(hi_seg, wave.hi, "high"), (lo_seg, wave.lo, "low")] {
            let tail = &seg[seg.len() - settle..];
            if tail.iter().any(|y| (y - target).abs() > SETTLE_BAND * amp.abs()) {
                return Err(Error::Domain(format!(
                    "cycle {c}: {what} level did not settle within 2% for {SETTLE_TIME} s"
                )));
            }
            sse += (tail.iter().sum::<f64>() / tail.len() as f64 - target).abs();
        }
        rise += rise_time_90(output, dt, up, wave.lo, wave.hi)
            .filter(|t| *t < half as f64 * dt)
            .ok_or_else(|| Error::Domain(format!("cycle {c}: rising edge never reached 90%")))?;
        fall += fall_time_90(output, dt, down, wave.hi, wave.lo)
            .filter(|t| *t < half as f64 * dt)
            .ok_or_else(|| Error::Domain(format!("cycle {c}: falling edge never reached 90%")))?;
        let peak = hi_seg.iter().map(|y| (y - wave.hi) * amp.signum()).fold(0.0, f64::max);
        over = over.max(peak / amp.abs());
        n += 1.0;
    }
    Ok(StepMetrics {
        rise_time_90: rise / n,
        fall_time_90: fall / n,
        overshoot: over,
        steady_state_error: sse / (2.0 * n),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chirp_starts_at_zero() {
        assert_eq!(log_chirp(0.1, 30.0, 20.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn chirp_end_frequency_and_phase() {
        let (f0, f1, d) = (0.1, 30.0, 20.0);
        assert!((chirp_frequency(f0, f1, d, d) - f1).abs() / f1 < 1e-9);
        let expected = 2.0 * PI * d * (f1 - f0) / (f1 / f0).ln();
        assert!((chirp_phase(f0, f1, d, d).unwrap() - expected).abs() < 1e-9 * expected);
        // Numerical derivative of the phase matches the instantaneous frequency.
        let t = 7.3;
        let h = 1e-6;
        let fd = (chirp_phase(f0, f1, d, t + h).unwrap() - chirp_phase(f0, f1, d, t - h).unwrap()) / (2.0 * h);
        assert!((fd / (2.0 * PI) - chirp_frequency(f0, f1, d, t)).abs() < 1e-6);
    }

    #[test]
    fn chirp_domain_errors() {
        assert!(log_chirp(0.0, 30.0, 20.0, 1.0).is_err());
        assert!(log_chirp(5.0, 3.0, 20.0, 1.0).is_err());
        assert!(log_chirp(0.1, 30.0, 20.0, 21.0).is_err());
    }

    #[test]
    fn rise_of_ideal_step_is_one_sample() {
        let mut y = vec![0.0; 10];
        y.extend(vec![1.0; 10]);
        assert_eq!(rise_time_90(&y, 0.001, 9, 0.0, 1.0), Some(0.001));
    }

    #[test]
    fn rise_of_ramp() {
        let dt = 0.001;
        let l = 0.2;
        let y: Vec<f64> = (0..400).map(|k| (k as f64 * dt / l).min(1.0)).collect();
        let r = rise_time_90(&y, dt, 0, 0.0, 1.0).unwrap();
        assert!((r - 0.9 * l).abs() <= dt + 1e-12);
    }

    #[test]
    fn never_crossing_is_absent() {
        assert_eq!(rise_time_90(&[0.0, 0.5, 0.6], 0.001, 0, 0.0, 1.0), None);
    }

    #[test]
    fn fall_is_symmetric() {
        let y: Vec<f64> = (0..1000).map(|k| (-(k as f64) * 0.001 / 0.05).exp()).collect();
        let f = fall_time_90(&y, 0.001, 0, 1.0, 0.0).unwrap();
        assert!((f - 10f64.ln() * 0.05).abs() <= 0.001);
    }
}
