use serde::{Deserialize, Serialize};

use crate::controller::GaitPhase;
use crate::csvio::Table;
use crate::error::{Error, Result};

use super::trial::TrialLog;

/// Points per time-normalized stance trace (0..=100 %).
pub const STANCE_POINTS: usize = 101;

/// Leading fraction of stance dropped for the `_excl15` figures.
pub const DEFAULT_EXCLUSION: f64 = 0.15;

/// Heel strike to the next heel strike, as log row indices (`end` exclusive).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrideWindow {
    pub start: usize,
    pub end: usize,
    pub toe_off: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Exclusion {
    MissingToeOff,
    ExtraToeOff,
    /// The phase sequence is not exactly loading, unloading, swing.
    PhaseSequence,
    Fault,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Segmentation {
    pub valid: Vec<StrideWindow>,
    pub excluded: Vec<(StrideWindow, Exclusion)>,
}

pub fn segment_strides(log: &TrialLog) -> Segmentation {
    let strikes: Vec<usize> = (0..log.len()).filter(|&i| log.heel_strike[i]).collect();
    let mut out = Segmentation::default();
    for w in strikes.windows(2) {
        let (start, end) = (w[0], w[1]);
        let toe: Vec<usize> = (start..end).filter(|&i| log.toe_off[i]).collect();
        let window = StrideWindow {
            start,
            end,
            toe_off: toe.first().copied(),
        };
        let mut phases: Vec<u8> = Vec::new();
        for &p in &log.phase[start..end] {
            if phases.last() != Some(&p) {
                phases.push(p);
            }
        }
        let expected = [GaitPhase::StanceLoading, GaitPhase::StanceUnloading, GaitPhase::Swing].map(GaitPhase::code);
        let reason = if log.fault[start..end].iter().any(|f| *f) {
            Some(Exclusion::Fault)
        } else if toe.is_empty() {
            Some(Exclusion::MissingToeOff)
        } else if toe.len() > 1 {
            Some(Exclusion::ExtraToeOff)
        } else if phases != expected {
            Some(Exclusion::PhaseSequence)
        } else {
            None
        };
        match reason {
            Some(r) => out.excluded.push((window, r)),
            None => out.valid.push(window),
        }
    }
    out
}

/// Mean and variance across strides at each stance percent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceBand {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

impl TraceBand {
    fn from_traces(traces: &[Vec<f64>]) -> Self {
        let n = traces.len() as f64;
        let mut band = TraceBand::default();
        for k in 0..STANCE_POINTS {
            let mean = traces.iter().map(|t| t[k]).sum::<f64>() / n;
            let var = traces.iter().map(|t| (t[k] - mean).powi(2)).sum::<f64>() / n;
            band.mean.push(mean);
            band.variance.push(var);
        }
        band
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StanceTraces {
    pub stance_percent: Vec<f64>,
    pub torque_cmd: TraceBand,
    pub torque_meas: TraceBand,
    pub s_ref: TraceBand,
    pub s_meas: TraceBand,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StrideStats {
    pub n_strides: usize,
    pub torque_rms: f64,
    /// With the leading exclusion fraction of stance dropped.
    pub torque_rms_excl15: f64,
    pub position_rms: f64,
    pub exclusion: f64,
    pub traces: StanceTraces,
}

/// Linear resampling of rows `start..=stop` onto [`STANCE_POINTS`] evenly
/// spaced stance percentages.
pub fn stance_resample(values: &[f64], start: usize, stop: usize) -> Vec<f64> {
    let span = (stop - start) as f64;
    (0..STANCE_POINTS)
        .map(|k| {
            let pos = start as f64 + span * k as f64 / (STANCE_POINTS - 1) as f64;
            let i = (pos.floor() as usize).min(stop.saturating_sub(1)).max(start);
            let f = pos - i as f64;
            if i + 1 > stop {
                values[i]
            } else {
                values[i] + f * (values[i + 1] - values[i])
            }
        })
        .collect()
}

fn rms(v: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x * x, n + 1));
    if n == 0 {
        0.0
    } else {
        (sum / n as f64).sqrt()
    }
}

/// Tracking errors over stance (heel strike up to, not including, the toe-off
/// row), time-normalized.
/// Errors are commanded minus measured torque and reference minus measured
/// translation.
pub fn tracking_stats(log: &TrialLog, windows: &[StrideWindow], exclusion: f64) -> Result<StrideStats> {
    if !(0.0..1.0).contains(&exclusion) {
        return Err(Error::Domain(format!("exclusion must be in [0, 1) (got {exclusion})")));
    }
    let usable: Vec<(usize, usize)> = windows
        .iter()
        .filter_map(|w| w.toe_off.filter(|t| *t > w.start + 1).map(|t| (w.start, t - 1)))
        .collect();
    if usable.is_empty() {
        return Err(Error::Domain("no stride window with a stance phase".into()));
    }
    let resample = |v: &[f64]| -> Vec<Vec<f64>> { usable.iter().map(|&(a, b)| stance_resample(v, a, b)).collect() };
    let tc = resample(&log.torque_cmd);
    let tm = resample(&log.torque_meas);
    let sr = resample(&log.s_ref);
    let sm = resample(&log.s_meas);
    let percent: Vec<f64> = (0..STANCE_POINTS).map(|k| 100.0 * k as f64 / (STANCE_POINTS - 1) as f64).collect();
    let first_kept = percent.iter().position(|p| *p >= 100.0 * exclusion - 1e-9).unwrap_or(0);

    let torque_err = |from: usize| {
        rms(tc
            .iter()
            .zip(&tm)
            .flat_map(|(c, m)| (from..STANCE_POINTS).map(move |k| c[k] - m[k])))
    };
    let position_rms = rms(sr
        .iter()
        .zip(&sm)
        .flat_map(|(r, m)| (0..STANCE_POINTS).map(move |k| r[k] - m[k])));
    Ok(StrideStats {
        n_strides: usable.len(),
        torque_rms: torque_err(0),
        torque_rms_excl15: torque_err(first_kept),
        position_rms,
        exclusion,
        traces: StanceTraces {
            stance_percent: percent,
            torque_cmd: TraceBand::from_traces(&tc),
            torque_meas: TraceBand::from_traces(&tm),
            s_ref: TraceBand::from_traces(&sr),
            s_meas: TraceBand::from_traces(&sm),
        },
    })
}

impl StanceTraces {
    /// Plot data: mean trace, variance band and reference per stance percent.
    pub fn to_table(&self) -> Table {
        Table::new()
            .with("stance_percent", self.stance_percent.clone())
            .with("torque_cmd_mean_nm", self.torque_cmd.mean.clone())
            .with("torque_cmd_var_nm2", self.torque_cmd.variance.clone())
            .with("torque_meas_mean_nm", self.torque_meas.mean.clone())
            .with("torque_meas_var_nm2", self.torque_meas.variance.clone())
            .with("s_ref_mean_m", self.s_ref.mean.clone())
            .with("s_ref_var_m2", self.s_ref.variance.clone())
            .with("s_meas_mean_m", self.s_meas.mean.clone())
            .with("s_meas_var_m2", self.s_meas.variance.clone())
    }
}

/// Anterior-then-posterior check for one window: mean measured translation
/// while loading exceeds the mean while unloading.
pub fn anterior_then_posterior(log: &TrialLog, w: &StrideWindow) -> bool {
    let mean_in = |phase: GaitPhase| {
        let v: Vec<f64> = (w.start..w.end)
            .filter(|&i| log.phase[i] == phase.code())
            .map(|i| log.s_meas[i])
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    match (mean_in(GaitPhase::StanceLoading), mean_in(GaitPhase::StanceUnloading)) {
        (Some(l), Some(u)) => l > u,
        _ => false,
    }
}

/// Largest |s| during stance across the windows.
pub fn max_stance_translation(log: &TrialLog, windows: &[StrideWindow]) -> f64 {
    windows
        .iter()
        .filter_map(|w| w.toe_off.map(|t| (w.start, t)))
        .flat_map(|(a, b)| log.s_meas[a..b].iter().map(|s| s.abs()))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventFidelity {
    pub markers: usize,
    pub detected: usize,
    pub max_latency: f64,
}

impl EventFidelity {
    pub fn rate(&self) -> f64 {
        if self.markers == 0 {
            1.0
        } else {
            self.detected as f64 / self.markers as f64
        }
    }
}

/// Matches each heel-strike marker to the first detection within `tolerance`.
pub fn event_fidelity(log: &TrialLog, tolerance: f64) -> EventFidelity {
    let mut out = EventFidelity {
        markers: 0,
        detected: 0,
        max_latency: 0.0,
    };
    for i in (0..log.len()).filter(|&i| log.heel_marker[i]) {
        out.markers += 1;
        let t0 = log.time[i];
        if let Some(j) = (i..log.len())
            .take_while(|&j| log.time[j] - t0 <= tolerance + 1e-12)
            .find(|&j| log.heel_strike[j])
        {
            out.detected += 1;
            out.max_latency = out.max_latency.max(log.time[j] - t0);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Synthetic log: `strides` cycles of 100 rows, stance rows 0..60.
    fn synthetic_log(strides: usize) -> TrialLog {
        let mut log = TrialLog::default();
        for s in 0..strides {
            for r in 0..100 {
                let phase = match r {
                    0..=29 => GaitPhase::StanceLoading,
                    30..=59 => GaitPhase::StanceUnloading,
                    _ => GaitPhase::Swing,
                };
                log.time.push((s * 100 + r) as f64 * 0.01);
                log.phase.push(phase.code());
                log.theta_ref.push(0.0);
                log.theta_meas.push(0.0);
                log.s_ref.push(0.0);
                log.s_meas.push(if r < 30 { 0.02 } else { -0.01 });
                log.torque_cmd.push(r as f64);
                log.torque_meas.push(r as f64);
                log.heel_marker.push(r == 0);
                log.heel_strike.push(r == 0);
                log.toe_off.push(r == 60);
                log.fault.push(false);
                log.stride.push(s as i64);
            }
        }
        log
    }

    #[test]
    fn clean_log_segments_fully() {
        let log = synthetic_log(51);
        let seg = segment_strides(&log);
        assert_eq!(seg.valid.len(), 50);
        assert!(seg.excluded.is_empty());
        assert!(seg.valid.iter().all(|w| anterior_then_posterior(&log, w)));
    }

    #[test]
    fn suppressed_heel_strike_merges_and_excludes() {
        let mut log = synthetic_log(51);
        log.heel_strike[1000] = false;
        let seg = segment_strides(&log);
        assert_eq!(seg.valid.len(), 48);
        assert_eq!(seg.excluded.len(), 1);
        assert_eq!(seg.excluded[0].1, Exclusion::ExtraToeOff);
    }

    #[test]
    fn fault_excludes() {
        let mut log = synthetic_log(3);
        log.fault[150] = true;
        let seg = segment_strides(&log);
        assert_eq!(seg.valid.len(), 1);
        assert_eq!(seg.excluded[0].1, Exclusion::Fault);
    }

    #[test]
    fn empty_log_has_no_windows() {
        let seg = segment_strides(&TrialLog::default());
        assert!(seg.valid.is_empty() && seg.excluded.is_empty());
    }

    #[test]
    fn perfect_tracking_is_zero() {
        let log = synthetic_log(4);
        let seg = segment_strides(&log);
        let st = tracking_stats(&log, &seg.valid, DEFAULT_EXCLUSION).unwrap();
        assert_eq!(st.n_strides, 3);
        assert_eq!(st.torque_rms, 0.0);
        assert_eq!(st.torque_rms_excl15, 0.0);
    }

    #[test]
    fn constant_offset_ignores_exclusion() {
        let mut log = synthetic_log(4);
        for m in &mut log.torque_meas {
            *m -= 5.0;
        }
        let seg = segment_strides(&log);
        let st = tracking_stats(&log, &seg.valid, DEFAULT_EXCLUSION).unwrap();
        assert!((st.torque_rms - 5.0).abs() < 1e-12);
        assert!((st.torque_rms_excl15 - 5.0).abs() < 1e-12);
    }

    #[test]
    fn early_error_is_excluded() {
        let mut log = synthetic_log(4);
        for s in 0..4 {
            for r in 0..6 {
                log.torque_meas[s * 100 + r] += 3.0;
            }
        }
        let seg = segment_strides(&log);
        let st = tracking_stats(&log, &seg.valid, DEFAULT_EXCLUSION).unwrap();
        assert!(st.torque_rms > 0.0);
        assert_eq!(st.torque_rms_excl15, 0.0);
    }

    #[test]
    fn resampling_preserves_rms() {
        let v: Vec<f64> = (0..=600).map(|i| (i as f64 * 0.02).sin() * 7.0 + 2.0).collect();
        let direct = rms(v[..600].iter().copied());
        let resampled = rms(stance_resample(&v, 0, 600).into_iter());
        assert!((resampled - direct).abs() / direct < 0.01, "{resampled} {direct}");
    }

    #[test]
    fn fidelity_counts_markers() {
        let log = synthetic_log(5);
        let f = event_fidelity(&log, 0.02);
        assert_eq!((f.markers, f.detected), (5, 5));
        assert_eq!(f.max_latency, 0.0);
    }
}
