use std::path::Path;
use std::time::Instant;

use crate::characterization::{
    bandwidth, run_chirp_test, run_hysteresis_test, run_stall_sweep, run_step_test, weight_ladder, BenchAxis,
    BandwidthCriterion, SystemUnderTest, TorqueBench, TranslationBench,
};
use crate::config::to_toml_string;
use crate::controller::ControllerConfig;
use crate::csvio::Table;
use crate::error::Result;
use crate::gait::{
    anterior_then_posterior, event_fidelity, max_stance_translation, run_walking_trial, save_stride, segment_strides,
    tracking_stats,
};
use crate::plant::PlantConfig;

use super::manifest::{sha256_hex, FileEntry, RunManifest};
use super::spec::{Experiment, ExperimentSpec, Prepared};

pub const SPEC_FILE: &str = "spec.toml";
pub const PLANT_FILE: &str = "plant.toml";
pub const CONTROLLER_FILE: &str = "controller.toml";
pub const PROFILE_FILE: &str = "profile.csv";
pub const SUMMARY_FILE: &str = "summary.csv";

/// Scalar results of one run, in the order they appear in `summary.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub metrics: Vec<(String, f64)>,
    /// Set when the experiment ran but its result is unusable (unsettled
    /// step, no bandwidth crossing, controller fault, too few strides).
    pub failure: Option<String>,
    pub manifest: RunManifest,
}

impl RunOutcome {
    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.iter().find(|(k, _)| k == name).map(|(_, v)| *v)
    }
}

struct Outputs<'a> {
    dir: &'a Path,
    files: Vec<String>,
}

impl Outputs<'_> {
    fn text(&mut self, name: &str, text: &str) -> Result<()> {
        std::fs::write(self.dir.join(name), text)?;
        self.files.push(name.into());
        Ok(())
    }

    fn table(&mut self, name: &str, t: &Table) -> Result<()> {
        t.write(&self.dir.join(name))?;
        self.files.push(name.into());
        Ok(())
    }
}

fn timeseries(dt: f64, reference: &[f64], measured: &[f64]) -> Table {
    Table::new()
        .with("time_s", (0..reference.len()).map(|k| k as f64 * dt).collect())
        .with("reference", reference.to_vec())
        .with("measured", measured.to_vec())
}

fn bench(axis: BenchAxis, plant: &PlantConfig, ctrl: &ControllerConfig, theta_lock: f64, seed: u64) -> Box<dyn SystemUnderTest> {
    match axis {
        BenchAxis::Plantarflexion => Box::new(TorqueBench::new(plant, ctrl, theta_lock, seed)),
        BenchAxis::Translation => Box::new(TranslationBench::new(plant, ctrl, seed)),
    }
}

/// Writes the resolved inputs so the run directory alone reproduces the run,
/// and returns their combined hash.
fn write_inputs(p: &Prepared, out: &mut Outputs) -> Result<String> {
    let mut spec = ExperimentSpec {
        plant: Some(PLANT_FILE.into()),
        controller: Some(CONTROLLER_FILE.into()),
        seed: Some(p.seed),
        output_dir: None,
        experiment: p.spec.experiment.clone(),
    };
    let mut texts = vec![to_toml_string(&p.plant)?, to_toml_string(&p.controller)?];
    if let (Experiment::Walk(w), Some(profile)) = (&mut spec.experiment, &p.profile) {
        w.profile = PROFILE_FILE.into();
        save_stride(profile, &out.dir.join(PROFILE_FILE))?;
        out.files.push(PROFILE_FILE.into());
        texts.push(std::fs::read_to_string(out.dir.join(PROFILE_FILE))?);
    }
    let spec_text = to_toml_string(&spec)?;
    out.text(SPEC_FILE, &spec_text)?;
    out.text(PLANT_FILE, &texts[0])?;
    out.text(CONTROLLER_FILE, &texts[1])?;
    texts.insert(0, spec_text);
    let mut joined = Vec::new();
    for t in &texts {
        joined.extend_from_slice(&(t.len() as u64).to_le_bytes());
        joined.extend_from_slice(t.as_bytes());
    }
    Ok(sha256_hex(&joined))
}

/// Runs the experiment, writes every output into `dir` and the manifest last.
pub fn execute(p: &Prepared, dir: &Path) -> Result<RunOutcome> {
    let start = Instant::now();
    std::fs::create_dir_all(dir)?;
    let mut out = Outputs { dir, files: Vec::new() };
    let spec_sha256 = write_inputs(p, &mut out)?;
    let (plant, ctrl, seed) = (&p.plant, &p.controller, p.seed);
    let mut metrics: Vec<(String, f64)> = Vec::new();
    let mut failure = None;
    let mut put = |k: &str, v: f64| metrics.push((k.to_string(), v));

    match &p.spec.experiment {
        Experiment::BenchStep(s) => {
            let mut sut = bench(s.axis, plant, ctrl, s.theta_lock_rad, seed);
            let run = run_step_test(sut.as_mut(), &s.wave)?;
            out.table("step_response.csv", &timeseries(run.dt, &run.reference, &run.measured))?;
            let m = run.metrics.map_or([f64::NAN; 4], |m| {
                [m.rise_time_90, m.fall_time_90, m.overshoot, m.steady_state_error]
            });
            put("rise_time_90_s", m[0]);
            put("fall_time_90_s", m[1]);
            put("overshoot_fraction", m[2]);
            put("steady_state_error", m[3]);
            put("saturated", f64::from(u8::from(run.saturated)));
            failure = run.diagnostic;
        }
        Experiment::BenchChirp(c) => {
            let mut sut = bench(c.axis, plant, ctrl, c.theta_lock_rad, seed);
            let run = run_chirp_test(sut.as_mut(), &c.sweep)?;
            out.table("chirp_timeseries.csv", &timeseries(run.dt, &run.reference, &run.measured))?;
            let f = &run.frf;
            out.table(
                "bode.csv",
                &Table::new()
                    .with("frequency_hz", f.frequencies.clone())
                    .with("magnitude_db", f.magnitude_db.clone())
                    .with("phase_deg", f.phase_deg.clone())
                    .with("coherence", f.coherence.clone()),
            )?;
            match bandwidth(f) {
                Ok(b) => {
                    put("bandwidth_hz", b.hz);
                    put(
                        "bound_by_phase",
                        f64::from(u8::from(b.criterion == BandwidthCriterion::Phase45deg)),
                    );
                }
                Err(e) => {
                    put("bandwidth_hz", f64::NAN);
                    put("bound_by_phase", f64::NAN);
                    failure = Some(e.to_string());
                }
            }
            put("saturated", f64::from(u8::from(run.saturated)));
        }
        Experiment::BenchHysteresis(h) => {
            let ladder = weight_ladder(h.ladder_top, h.ladder_rungs);
            let r = run_hysteresis_test(plant, h.axis, &ladder, h.hold_time)?;
            out.table(
                "hysteresis.csv",
                &Table::new()
                    .with("applied", r.applied.clone())
                    .with("measured", r.measured.clone()),
            )?;
            put("rms_error", r.rms_error);
            put("rms_error_fraction_of_full_scale", r.rms_error / h.ladder_top);
            put("loop_area", r.loop_area);
        }
        Experiment::BenchStall(s) => {
            let r = run_stall_sweep(plant, s)?;
            let c = &r.load_velocity_curve;
            out.table(
                "stall_curve.csv",
                &Table::new()
                    .with("time_s", c.iter().map(|x| x.0).collect())
                    .with("load", c.iter().map(|x| x.1).collect())
                    .with("velocity", c.iter().map(|x| x.2).collect())
                    .with("power_w", c.iter().map(|x| x.1 * x.2).collect()),
            )?;
            put("peak_load", r.peak_load);
            put("peak_velocity", r.peak_velocity);
            put("peak_power_w", r.peak_power);
        }
        Experiment::Walk(w) => {
            let profile = p.profile.as_ref().expect("walk runs carry a resolved profile");
            let log = run_walking_trial(plant, ctrl, profile, w.mode, &w.trial, seed)?;
            log.write(&dir.join("trial_log.csv"))?;
            out.files.push("trial_log.csv".into());
            let seg = segment_strides(&log);
            let all: Vec<_> = seg
                .valid
                .iter()
                .map(|x| (*x, -1.0))
                .chain(seg.excluded.iter().map(|(x, why)| (*x, *why as u8 as f64)))
                .collect();
            // Exclusion code -1 marks a valid stride.
            let windows = Table::new()
                .with("start_time_s", all.iter().map(|(x, _)| log.time[x.start]).collect())
                .with("start_row", all.iter().map(|(x, _)| x.start as f64).collect())
                .with("end_row", all.iter().map(|(x, _)| x.end as f64).collect())
                .with(
                    "toe_off_row",
                    all.iter().map(|(x, _)| x.toe_off.map_or(-1.0, |t| t as f64)).collect(),
                )
                .with("exclusion_code", all.iter().map(|(_, c)| *c).collect());
            out.table("strides.csv", &windows)?;
            let faults = log.fault.iter().filter(|f| **f).count();
            let fid = event_fidelity(&log, w.event_tolerance);
            let ordered = seg.valid.iter().filter(|x| anterior_then_posterior(&log, x)).count();
            put("valid_strides", seg.valid.len() as f64);
            put("excluded_strides", seg.excluded.len() as f64);
            match tracking_stats(&log, &seg.valid, w.stance_exclusion_fraction) {
                Ok(st) => {
                    out.table("stance_traces.csv", &st.traces.to_table())?;
                    put("torque_rms_nm", st.torque_rms);
                    put("torque_rms_excl_nm", st.torque_rms_excl15);
                    put("position_rms_m", st.position_rms);
                }
                Err(e) => {
                    put("torque_rms_nm", f64::NAN);
                    put("torque_rms_excl_nm", f64::NAN);
                    put("position_rms_m", f64::NAN);
                    failure = Some(e.to_string());
                }
            }
            put("heel_markers", fid.markers as f64);
            put("heel_strikes_detected", fid.detected as f64);
            put("event_detection_rate", fid.rate());
            put("max_event_latency_s", fid.max_latency);
            put("ordered_fraction", ordered as f64 / seg.valid.len().max(1) as f64);
            put("max_stance_translation_m", max_stance_translation(&log, &seg.valid));
            put("fault_rows", faults as f64);
            if faults > 0 {
                failure = Some(format!("controller fault latched on {faults} log rows"));
            } else if seg.valid.len() < w.trial.n_strides {
                failure.get_or_insert(format!(
                    "only {} valid strides within {} simulated",
                    seg.valid.len(),
                    w.trial.max_strides
                ));
            }
        }
    }

    let summary = metrics
        .iter()
        .fold(Table::new(), |t, (k, v)| t.with(k.as_str(), vec![*v]));
    out.table(SUMMARY_FILE, &summary)?;

    let files = out
        .files
        .iter()
        .map(|f| FileEntry::of(dir, f))
        .collect::<Result<Vec<_>>>()?;
    let manifest = RunManifest {
        manifest_version: super::manifest::MANIFEST_VERSION,
        experiment: p.spec.experiment.kind().into(),
        seed,
        spec_sha256,
        versions: RunManifest::versions(),
        wall_time: start.elapsed().as_secs_f64(),
        files,
    };
    manifest.write(dir)?;
    Ok(RunOutcome {
        metrics,
        failure,
        manifest,
    })
}
