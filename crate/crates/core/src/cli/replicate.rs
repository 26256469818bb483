use std::fmt;
use std::path::Path;

use rayon::prelude::*;

use crate::characterization::{BenchAxis, ChirpSpec, SquareWave, StallSetup};
use crate::controller::{ControlMode, ControllerConfig};
use crate::error::Result;
use crate::plant::PlantConfig;

use super::run::{execute, RunOutcome};
use super::spec::{ChirpParams, Experiment, HysteresisParams, Prepared, StepParams, WalkParams};

/// Seed shared by every sub-run of the suite.
pub const SUITE_SEED: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Suite {
    /// Bench characterization, both walking modes and the frictionless ablation.
    Full,
    Bench,
    Walk,
    /// Weight ladders on a frictionless transmission; expected out-of-band-low.
    Frictionless,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    OutOfBandLow,
    OutOfBandHigh,
    Failed,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "pass",
            Status::OutOfBandLow => "out-of-band-low",
            Status::OutOfBandHigh => "out-of-band-high",
            Status::Failed => "failed",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub metric: String,
    pub paper: String,
    pub measured: Option<f64>,
    pub band: (f64, f64),
    pub status: Status,
    /// Why the row failed, when it did.
    pub note: Option<String>,
}

fn num(v: f64) -> String {
    if v == 0.0 || (1e-3..1e6).contains(&v.abs()) {
        format!("{v:.4}")
    } else {
        format!("{v:.3e}")
    }
}

impl Row {
    pub fn band_text(&self) -> String {
        match self.band {
            (lo, hi) if hi.is_infinite() => format!(">= {}", num(lo)),
            (lo, hi) if lo == hi => format!("= {}", num(lo)),
            (lo, hi) => format!("[{}, {}]", num(lo), num(hi)),
        }
    }

    pub fn measured_text(&self) -> String {
        self.measured.map_or("-".into(), num)
    }
}

pub fn classify(value: f64, (lo, hi): (f64, f64)) -> Status {
    if value.is_nan() {
        Status::Failed
    } else if value < lo {
        Status::OutOfBandLow
    } else if value > hi {
        Status::OutOfBandHigh
    } else {
        Status::Pass
    }
}

/// Symmetric relative band around a nominal value.
#[cfg(test)]
fn pm(nominal: f64, fraction: f64) -> (f64, f64) {
    (nominal * (1.0 - fraction), nominal * (1.0 + fraction))
}

/// A suite row: which sub-run metric, scaled how, judged against which band.
struct Check {
    run: &'static str,
    key: &'static str,
    metric: &'static str,
    paper: &'static str,
    scale: f64,
    band: (f64, f64),
}

const fn check(
    run: &'static str,
    key: &'static str,
    metric: &'static str,
    paper: &'static str,
    scale: f64,
    band: (f64, f64),
) -> Check {
    Check {
        run,
        key,
        metric,
        paper,
        scale,
        band,
    }
}

pub fn torque_step() -> Experiment {
    Experiment::BenchStep(StepParams {
        axis: BenchAxis::Plantarflexion,
        theta_lock_rad: -0.1,
        wave: SquareWave {
            lo: 0.0,
            hi: 100.0,
            period: 5.0,
            cycles: 3,
        },
    })
}

pub fn translation_step() -> Experiment {
    Experiment::BenchStep(StepParams {
        axis: BenchAxis::Translation,
        theta_lock_rad: -0.1,
        wave: SquareWave {
            lo: -0.045,
            hi: 0.045,
            period: 5.0,
            cycles: 3,
        },
    })
}

pub fn torque_chirp() -> Experiment {
    Experiment::BenchChirp(ChirpParams {
        axis: BenchAxis::Plantarflexion,
        theta_lock_rad: -0.1,
        sweep: ChirpSpec {
            f0: 0.1,
            f1: 30.0,
            duration: 20.0,
            bias: 45.0,
            amplitude: 20.0,
            lead_in: 1.0,
        },
    })
}

pub fn translation_chirp() -> Experiment {
    Experiment::BenchChirp(ChirpParams {
        axis: BenchAxis::Translation,
        theta_lock_rad: -0.1,
        sweep: ChirpSpec {
            f0: 0.1,
            f1: 30.0,
            duration: 20.0,
            bias: 0.0,
            amplitude: 0.025,
            lead_in: 1.0,
        },
    })
}

pub fn stall(axis: BenchAxis) -> Experiment {
    Experiment::BenchStall(StallSetup::default_for(axis))
}

pub fn hysteresis(axis: BenchAxis) -> Experiment {
    let (ladder_top, ladder_rungs) = match axis {
        BenchAxis::Plantarflexion => (80.0, 8),
        BenchAxis::Translation => (300.0, 6),
    };
    Experiment::BenchHysteresis(HysteresisParams {
        axis,
        ladder_top,
        ladder_rungs,
        hold_time: 1.0,
    })
}

pub fn walk(mode: ControlMode) -> Experiment {
    Experiment::Walk(WalkParams::new(mode))
}

const BENCH_CHECKS: &[Check] = &[
    check("torque_chirp", "bandwidth_hz", "torque bandwidth (Hz)", "7.2", 1.0, (6.12, 8.28)),
    check("torque_chirp", "bound_by_phase", "torque bandwidth bound by 45 deg phase", "0 (-3 dB)", 1.0, (0.0, 0.0)),
    check("translation_chirp", "bandwidth_hz", "translation bandwidth (Hz)", "6.9", 1.0, (5.865, 7.935)),
    check("translation_chirp", "bound_by_phase", "translation bandwidth bound by 45 deg phase", "0 (-3 dB)", 1.0, (0.0, 0.0)),
    check("torque_step", "rise_time_90_s", "torque step rise time (ms)", "191", 1e3, (150.0, 250.0)),
    check("torque_step", "fall_time_90_s", "torque step fall time (ms)", "179", 1e3, (150.0, 250.0)),
    check("translation_step", "rise_time_90_s", "translation step rise time (ms)", "162", 1e3, (120.0, 220.0)),
    check("translation_step", "fall_time_90_s", "translation step fall time (ms)", "159", 1e3, (120.0, 220.0)),
    check("pf_stall", "peak_load", "PF stall peak torque (N*m)", "160", 1.0, (152.0, 168.0)),
    check("pf_stall", "peak_velocity", "PF stall peak velocity (rad/s)", "1.12", 1.0, (1.008, 1.232)),
    check("pf_stall", "peak_power_w", "PF stall peak power (W)", "122", 1.0, (109.8, 134.2)),
    check("translation_stall", "peak_load", "translation stall peak force (N)", "394", 1.0, (374.3, 413.7)),
    check("translation_stall", "peak_velocity", "translation stall peak velocity (m/s)", "0.4", 1.0, (0.36, 0.44)),
    check("translation_stall", "peak_power_w", "translation stall peak power (W)", "140", 1.0, (126.0, 154.0)),
    check("pf_hysteresis", "rms_error", "PF weight-ladder RMS error (N*m)", "6.8", 1.0, (4.76, 8.84)),
    check("translation_hysteresis", "rms_error", "translation weight-ladder RMS error (N)", "49.5", 1.0, (34.65, 64.35)),
];

const ABLATION_CHECKS: &[Check] = &[
    check("pf_hysteresis_frictionless", "rms_error_fraction_of_full_scale", "frictionless PF ladder RMS / full scale", "-", 1.0, (0.0, 1e-6)),
    check("translation_hysteresis_frictionless", "rms_error_fraction_of_full_scale", "frictionless translation ladder RMS / full scale", "-", 1.0, (0.0, 1e-6)),
];

const FRICTIONLESS_CHECKS: &[Check] = &[
    check("pf_hysteresis_frictionless", "rms_error", "PF weight-ladder RMS error (N*m)", "6.8", 1.0, (4.76, 8.84)),
    check("translation_hysteresis_frictionless", "rms_error", "translation weight-ladder RMS error (N)", "49.5", 1.0, (34.65, 64.35)),
];

const WALK_CHECKS: &[Check] = &[
    check("walk_revolute_1dof", "valid_strides", "1-DoF valid strides", "50", 1.0, (50.0, f64::INFINITY)),
    check("walk_revolute_1dof", "event_detection_rate", "1-DoF heel-strike detection rate", "1.0", 1.0, (1.0, 1.0)),
    check("walk_revolute_1dof", "torque_rms_excl_nm", "1-DoF torque RMS, first 15% stance excluded (N*m)", "4.3", 1.0, (0.0, 10.0)),
    check("walk_revolute_1dof", "max_stance_translation_m", "1-DoF max |s| in stance (mm)", "-", 1e3, (0.0, 1.0)),
    check("walk_two_dof", "valid_strides", "2-DoF valid strides", "50", 1.0, (50.0, f64::INFINITY)),
    check("walk_two_dof", "event_detection_rate", "2-DoF heel-strike detection rate", "1.0", 1.0, (1.0, 1.0)),
    check("walk_two_dof", "torque_rms_excl_nm", "2-DoF torque RMS, first 15% stance excluded (N*m)", "2.8", 1.0, (0.0, 10.0)),
    check("walk_two_dof", "ordered_fraction", "2-DoF strides translating anterior then posterior", "1.0", 1.0, (1.0, 1.0)),
];

type SubRun = (&'static str, Experiment, PlantConfig);

fn sub_runs(suite: Suite) -> Vec<SubRun> {
    let plant = PlantConfig::default();
    let smooth = plant.frictionless();
    let bench = || -> Vec<SubRun> {
        vec![
            ("torque_chirp", torque_chirp(), plant.clone()),
            ("translation_chirp", translation_chirp(), plant.clone()),
            ("torque_step", torque_step(), plant.clone()),
            ("translation_step", translation_step(), plant.clone()),
            ("pf_stall", stall(BenchAxis::Plantarflexion), plant.clone()),
            ("translation_stall", stall(BenchAxis::Translation), plant.clone()),
            ("pf_hysteresis", hysteresis(BenchAxis::Plantarflexion), plant.clone()),
            ("translation_hysteresis", hysteresis(BenchAxis::Translation), plant.clone()),
        ]
    };
    let walks = || -> Vec<SubRun> {
        vec![
            ("walk_revolute_1dof", walk(ControlMode::Revolute1DoF), plant.clone()),
            ("walk_two_dof", walk(ControlMode::TwoDoF), plant.clone()),
        ]
    };
    let ablation = || -> Vec<SubRun> {
        vec![
            ("pf_hysteresis_frictionless", hysteresis(BenchAxis::Plantarflexion), smooth.clone()),
            ("translation_hysteresis_frictionless", hysteresis(BenchAxis::Translation), smooth.clone()),
        ]
    };
    match suite {
        Suite::Full => [bench(), walks(), ablation()].concat(),
        Suite::Bench => bench(),
        Suite::Walk => walks(),
        Suite::Frictionless => ablation(),
    }
}

fn checks(suite: Suite) -> Vec<&'static Check> {
    let pick = |sets: &[&'static [Check]]| sets.iter().flat_map(|s| s.iter()).collect();
    match suite {
        Suite::Full => pick(&[BENCH_CHECKS, WALK_CHECKS, ABLATION_CHECKS]),
        Suite::Bench => pick(&[BENCH_CHECKS]),
        Suite::Walk => pick(&[WALK_CHECKS]),
        Suite::Frictionless => pick(&[FRICTIONLESS_CHECKS, ABLATION_CHECKS]),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub rows: Vec<Row>,
}

impl Report {
    pub fn any_failed(&self) -> bool {
        self.rows.iter().any(|r| r.status == Status::Failed)
    }

    pub fn row(&self, metric: &str) -> Option<&Row> {
        self.rows.iter().find(|r| r.metric == metric)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(std::io::Error::from)?;
        let io = |e: csv::Error| crate::Error::Io(e.into());
        w.write_record(["metric", "paper_value", "measured", "band", "status"]).map_err(io)?;
        for r in &self.rows {
            let measured = r.measured.map_or(String::new(), crate::csvio::format_value);
            w.write_record([r.metric.as_str(), &r.paper, &measured, &r.band_text(), &r.status.to_string()])
                .map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let header = ["metric", "paper", "measured", "band", "status"];
        let cells: Vec<[String; 5]> = self
            .rows
            .iter()
            .map(|r| [r.metric.clone(), r.paper.clone(), r.measured_text(), r.band_text(), r.status.to_string()])
            .collect();
        let mut width = header.map(str::len);
        for c in &cells {
            for (w, s) in width.iter_mut().zip(c) {
                *w = (*w).max(s.len());
            }
        }
        let line = |f: &mut fmt::Formatter<'_>, c: [&str; 5]| {
            writeln!(
                f,
                "{:<w0$}  {:>w1$}  {:>w2$}  {:<w3$}  {}",
                c[0],
                c[1],
                c[2],
                c[3],
                c[4],
                w0 = width[0],
                w1 = width[1],
                w2 = width[2],
                w3 = width[3]
            )
        };
        line(f, header)?;
        for c in &cells {
            line(f, [&c[0], &c[1], &c[2], &c[3], &c[4]])?;
        }
        for r in self.rows.iter().filter_map(|r| r.note.as_ref().map(|n| (r, n))) {
            writeln!(f, "{}: {}", r.0.metric, r.1)?;
        }
        Ok(())
    }
}

fn judge(c: &Check, outcome: Option<&std::result::Result<RunOutcome, String>>) -> Row {
    let mut row = Row {
        metric: c.metric.into(),
        paper: c.paper.into(),
        measured: None,
        band: c.band,
        status: Status::Failed,
        note: None,
    };
    match outcome {
        None => row.note = Some(format!("sub-run {} was not scheduled", c.run)),
        Some(Err(e)) => row.note = Some(e.clone()),
        Some(Ok(o)) => {
            row.measured = o.metric(c.key).map(|v| v * c.scale);
            match (&o.failure, row.measured) {
                (Some(why), _) => row.note = Some(why.clone()),
                (None, Some(v)) => row.status = classify(v, c.band),
                (None, None) => row.note = Some(format!("{} did not report {}", c.run, c.key)),
            }
        }
    }
    row
}

/// Runs every sub-run of `suite` in parallel, each in its own directory under
/// `out`, and writes `summary.csv` there.
pub fn replicate_paper(suite: Suite, out: &Path) -> Result<Report> {
    std::fs::create_dir_all(out)?;
    let ctrl = ControllerConfig::default();
    let results: Vec<(&str, std::result::Result<RunOutcome, String>)> = sub_runs(suite)
        .into_par_iter()
        .map(|(name, experiment, plant)| {
            let r = Prepared::from_parts(experiment, plant, ctrl.clone(), SUITE_SEED)
                .and_then(|p| execute(&p, &out.join(name)))
                .map_err(|e| e.to_string());
            (name, r)
        })
        .collect();
    let rows = checks(suite)
        .into_iter()
        .map(|c| judge(c, results.iter().find(|(n, _)| *n == c.run).map(|(_, r)| r)))
        .collect();
    let report = Report { rows };
    report.write_csv(&out.join("summary.csv"))?;
    Ok(report)
}
