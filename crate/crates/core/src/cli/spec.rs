use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::characterization::{BenchAxis, ChirpSpec, SquareWave, StallSetup, SETTLE_TIME};
use crate::config::to_toml_string;
use crate::controller::{ControlMode, ControllerConfig};
use crate::error::{Error, Result, Violation};
use crate::gait::{load_stride, synth_stride, StrideProfile, StrideShape, TrialSettings, DEFAULT_EXCLUSION};
use crate::plant::PlantConfig;

/// Config reference naming the compiled-in defaults instead of a file.
pub const BUILTIN: &str = "builtin";

/// One experiment: which configs, which protocol, which seed.
///
/// Config and profile paths are relative to the spec file; `output_dir` is
/// relative to the working directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plant: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controller: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub experiment: Experiment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Experiment {
    BenchStep(StepParams),
    BenchChirp(ChirpParams),
    BenchHysteresis(HysteresisParams),
    BenchStall(StallSetup),
    Walk(WalkParams),
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::BenchStep(_) => "bench_step",
            Experiment::BenchChirp(_) => "bench_chirp",
            Experiment::BenchHysteresis(_) => "bench_hysteresis",
            Experiment::BenchStall(_) => "bench_stall",
            Experiment::Walk(_) => "walk",
        }
    }
}

fn default_theta_lock() -> f64 {
    -0.1
}

/// Square-wave levels are N*m on the plantarflexion axis and m on the stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepParams {
    pub axis: BenchAxis,
    /// Ankle angle the torque fixture clamps at.
    #[serde(default = "default_theta_lock")]
    pub theta_lock_rad: f64,
    pub wave: SquareWave,
}

/// Sweep bias and amplitude are N*m on the plantarflexion axis and m on the stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChirpParams {
    pub axis: BenchAxis,
    #[serde(default = "default_theta_lock")]
    pub theta_lock_rad: f64,
    pub sweep: ChirpSpec,
}

/// Ladder loads are N*m on the plantarflexion axis and N on the stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HysteresisParams {
    pub axis: BenchAxis,
    pub ladder_top: f64,
    pub ladder_rungs: usize,
    #[serde(rename = "hold_time_s")]
    pub hold_time: f64,
}

fn default_speed() -> f64 {
    1.0
}

fn default_exclusion() -> f64 {
    DEFAULT_EXCLUSION
}

fn default_event_tolerance() -> f64 {
    0.05
}

fn default_profile() -> String {
    BUILTIN.into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WalkParams {
    pub mode: ControlMode,
    /// Stride profile CSV, or `builtin` for the synthetic stride.
    #[serde(default = "default_profile")]
    pub profile: String,
    /// Speed the synthetic stride is generated for; ignored for a file profile.
    #[serde(rename = "walking_speed_m_per_s", default = "default_speed")]
    pub walking_speed: f64,
    #[serde(default)]
    pub shape: StrideShape,
    #[serde(default)]
    pub trial: TrialSettings,
    /// Leading fraction of stance dropped from the second torque RMS.
    #[serde(default = "default_exclusion")]
    pub stance_exclusion_fraction: f64,
    /// Heel strikes detected later than this after the marker count as missed.
    #[serde(rename = "event_tolerance_s", default = "default_event_tolerance")]
    pub event_tolerance: f64,
}

impl WalkParams {
    pub fn new(mode: ControlMode) -> Self {
        Self {
            mode,
            profile: BUILTIN.into(),
            walking_speed: default_speed(),
            shape: StrideShape::default(),
            trial: TrialSettings::default(),
            stance_exclusion_fraction: DEFAULT_EXCLUSION,
            event_tolerance: default_event_tolerance(),
        }
    }
}

/// `--set key=value`. Keys starting with `plant.` or `controller.` address the
/// referenced configuration; any other key addresses the spec itself.
#[derive(Debug, Clone, PartialEq)]
pub struct Override {
    pub key: String,
    pub value: toml::Value,
}

impl std::str::FromStr for Override {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (key, raw) = s.split_once('=').ok_or_else(|| format!("expected key=value, got {s:?}"))?;
        let key = key.trim();
        if key.is_empty() || key.split('.').any(str::is_empty) {
            return Err(format!("malformed key {key:?}"));
        }
        let raw = raw.trim();
        // Bare words that are not TOML literals are taken as strings.
        let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.to_string()));
        Ok(Self {
            key: key.to_string(),
            value,
        })
    }
}

fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> std::result::Result<(), String> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().unwrap_or(key);
    let mut cur = table;
    for p in parts {
        cur = cur
            .entry(p)
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| format!("{key}: {p} is not a table"))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

fn apply(table: &mut toml::Table, overrides: &[&Override], strip: &str) -> std::result::Result<(), String> {
    for o in overrides {
        set_path(table, o.key.strip_prefix(strip).unwrap_or(&o.key), o.value.clone())?;
    }
    Ok(())
}

/// A spec with its configs and profile resolved, ready to run.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub spec: ExperimentSpec,
    pub plant: PlantConfig,
    pub controller: ControllerConfig,
    pub profile: Option<StrideProfile>,
    pub seed: u64,
}

impl Prepared {
    /// Builds a run from in-memory configs; the spec's own references are ignored.
    pub fn from_parts(
        experiment: Experiment,
        plant: PlantConfig,
        controller: ControllerConfig,
        seed: u64,
    ) -> Result<Self> {
        let spec = ExperimentSpec {
            plant: Some(BUILTIN.into()),
            controller: Some(BUILTIN.into()),
            seed: Some(seed),
            output_dir: None,
            experiment,
        };
        let mut v = Vec::new();
        let profile = resolve_profile(&spec.experiment, &plant, Path::new("."), &mut v);
        check(&spec, &plant, &controller, &mut v);
        if !v.is_empty() {
            return Err(Error::Invalid(v));
        }
        Ok(Self {
            spec,
            plant,
            controller,
            profile,
            seed,
        })
    }
}

fn read_table(path: &Path) -> Result<toml::Table> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Unreadable {
        path: path.to_path_buf(),
        source,
    })?;
    text.parse::<toml::Table>().map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn decode<T: DeserializeOwned>(table: toml::Table, origin: &Path) -> Result<T> {
    T::deserialize(table).map_err(|e| Error::Parse {
        path: origin.to_path_buf(),
        message: e.to_string(),
    })
}

/// Resolves a `plant` or `controller` reference and applies its overrides.
/// Problems are recorded against `key` rather than returned.
fn resolve_config<T: DeserializeOwned + Serialize + Default>(
    key: &str,
    reference: Option<&str>,
    base: &Path,
    overrides: &[&Override],
    v: &mut Vec<Violation>,
) -> Option<T> {
    let Some(reference) = reference else {
        v.push(Violation::new(key, format!("missing {key} configuration reference (a path or \"{BUILTIN}\")")));
        return None;
    };
    let (mut table, origin) = if reference == BUILTIN {
        let text = to_toml_string(&T::default()).ok()?;
        (text.parse::<toml::Table>().ok()?, PathBuf::from(BUILTIN))
    } else {
        let path = base.join(reference);
        match read_table(&path) {
            Ok(t) => (t, path),
            Err(e) => {
                v.push(Violation::new(key, e.to_string()));
                return None;
            }
        }
    };
    if let Err(e) = apply(&mut table, overrides, &format!("{key}.")) {
        v.push(Violation::new(key, e));
        return None;
    }
    match decode(table, &origin) {
        Ok(c) => Some(c),
        Err(e) => {
            v.push(Violation::new(key, e.to_string()));
            None
        }
    }
}

fn resolve_profile(
    experiment: &Experiment,
    plant: &PlantConfig,
    base: &Path,
    v: &mut Vec<Violation>,
) -> Option<StrideProfile> {
    let Experiment::Walk(w) = experiment else {
        return None;
    };
    let key = "experiment.walk.profile";
    let loaded = if w.profile == BUILTIN {
        synth_stride(w.walking_speed, &w.shape)
    } else {
        load_stride(&base.join(&w.profile), plant)
    };
    match loaded {
        Ok(p) => Some(p),
        Err(Error::Profile(list)) => {
            v.extend(list.into_iter().map(|m| Violation::new(key, m)));
            None
        }
        Err(e) => {
            v.push(Violation::new(key, e.to_string()));
            None
        }
    }
}

fn positive(v: &mut Vec<Violation>, key: &str, x: f64) {
    if !(x > 0.0 && x.is_finite()) {
        v.push(Violation::new(key, format!("must be positive (got {x})")));
    }
}

fn experiment_violations(e: &Experiment, plant: &PlantConfig, ctrl: &ControllerConfig) -> Vec<Violation> {
    let mut v = Vec::new();
    let nyquist = 0.5 / ctrl.period();
    match e {
        Experiment::BenchStep(p) => {
            let k = "experiment.bench_step.wave";
            if p.wave.cycles < 2 {
                v.push(Violation::new(format!("{k}.cycles"), "at least two cycles are needed; the first is discarded"));
            }
            if !(p.wave.period > 2.0 * SETTLE_TIME) {
                v.push(Violation::new(
                    format!("{k}.period_s"),
                    format!("half-period must exceed the {SETTLE_TIME} s settling window (got {})", p.wave.period),
                ));
            }
            if !(p.wave.hi - p.wave.lo).is_normal() {
                v.push(Violation::new(format!("{k}.hi"), "step amplitude hi - lo must be non-zero and finite"));
            }
        }
        Experiment::BenchChirp(p) => {
            let k = "experiment.bench_chirp.sweep";
            positive(&mut v, &format!("{k}.f0_hz"), p.sweep.f0);
            positive(&mut v, &format!("{k}.duration_s"), p.sweep.duration);
            positive(&mut v, &format!("{k}.amplitude"), p.sweep.amplitude);
            if !(p.sweep.f1 > p.sweep.f0 && p.sweep.f1 < nyquist) {
                v.push(Violation::new(
                    format!("{k}.f1_hz"),
                    format!("must lie between f0 and the control Nyquist frequency {nyquist} Hz (got {})", p.sweep.f1),
                ));
            }
            if !(p.sweep.lead_in >= 0.0) {
                v.push(Violation::new(format!("{k}.lead_in_s"), "must be non-negative"));
            }
        }
        Experiment::BenchHysteresis(p) => {
            let k = "experiment.bench_hysteresis";
            positive(&mut v, &format!("{k}.ladder_top"), p.ladder_top);
            positive(&mut v, &format!("{k}.hold_time_s"), p.hold_time);
            if p.ladder_rungs < 1 {
                v.push(Violation::new(format!("{k}.ladder_rungs"), "must be at least 1"));
            }
        }
        Experiment::BenchStall(s) => {
            let k = "experiment.bench_stall";
            positive(&mut v, &format!("{k}.spring_rate"), s.spring_rate);
            positive(&mut v, &format!("{k}.duration_s"), s.duration);
            positive(&mut v, &format!("{k}.velocity_window_s"), s.velocity_window);
            let [lo, hi] = match s.axis {
                BenchAxis::Plantarflexion => plant.flexion_limits,
                BenchAxis::Translation => plant.translation_limits,
            };
            if !(lo..=hi).contains(&s.start) {
                v.push(Violation::new(format!("{k}.start"), format!("must lie within the joint limits [{lo}, {hi}]")));
            }
        }
        Experiment::Walk(w) => {
            let k = "experiment.walk";
            positive(&mut v, &format!("{k}.walking_speed_m_per_s"), w.walking_speed);
            positive(&mut v, &format!("{k}.event_tolerance_s"), w.event_tolerance);
            if !(0.0..1.0).contains(&w.stance_exclusion_fraction) {
                v.push(Violation::new(format!("{k}.stance_exclusion_fraction"), "must lie in [0, 1)"));
            }
            v.extend(w.trial.violations().into_iter().map(|m| Violation::new(format!("{k}.trial"), m)));
        }
    }
    v
}

fn check(spec: &ExperimentSpec, plant: &PlantConfig, ctrl: &ControllerConfig, v: &mut Vec<Violation>) {
    let prefixed = |p: &str, list: Vec<Violation>| {
        list.into_iter()
            .map(|x| Violation::new(format!("{p}.{}", x.key), x.message))
            .collect::<Vec<_>>()
    };
    v.extend(prefixed("plant", plant.violations()));
    // Controller checks that depend on the plant only make sense for a valid plant.
    if v.is_empty() {
        let mut c = ctrl.clone();
        if let Experiment::Walk(w) = &spec.experiment {
            c.mode = w.mode;
        }
        v.extend(prefixed("controller", c.violations(plant)));
    }
    v.extend(experiment_violations(&spec.experiment, plant, ctrl));
}

/// Reads, overrides, resolves and validates a spec without running it.
///
/// An unreadable spec file is [`Error::Unreadable`] and a spec that is not
/// valid TOML for [`ExperimentSpec`] is [`Error::Parse`]; everything else that
/// is wrong is collected into one [`Error::Invalid`].
pub fn prepare(path: &Path, overrides: &[Override]) -> Result<Prepared> {
    let mut table = read_table(path)?;
    let (cfg, own): (Vec<&Override>, Vec<&Override>) = overrides
        .iter()
        .partition(|o| o.key.starts_with("plant.") || o.key.starts_with("controller."));
    apply(&mut table, &own, "").map_err(Error::Config)?;
    let spec: ExperimentSpec = decode(table, path)?;
    let base = path.parent().unwrap_or(Path::new("."));

    let mut v = Vec::new();
    if spec.seed.is_none() {
        v.push(Violation::new("seed", "must be set explicitly (in the spec or with --seed)"));
    }
    let pick = |p: &str| cfg.iter().copied().filter(|o| o.key.starts_with(p)).collect::<Vec<_>>();
    let plant: Option<PlantConfig> = resolve_config("plant", spec.plant.as_deref(), base, &pick("plant."), &mut v);
    let ctrl: Option<ControllerConfig> =
        resolve_config("controller", spec.controller.as_deref(), base, &pick("controller."), &mut v);
    let profile = plant
        .as_ref()
        .and_then(|p| resolve_profile(&spec.experiment, p, base, &mut v));
    if let (Some(p), Some(c)) = (&plant, &ctrl) {
        check(&spec, p, c, &mut v);
    }
    match (plant, ctrl, spec.seed) {
        (Some(plant), Some(controller), Some(seed)) if v.is_empty() => Ok(Prepared {
            spec,
            plant,
            controller,
            profile,
            seed,
        }),
        _ => Err(Error::Invalid(v)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn override_values_parse_as_toml() {
        let o: Override = "plant.timestep_s=0.002".parse().unwrap();
        assert_eq!(o.value, toml::Value::Float(0.002));
        let o: Override = "seed=7".parse().unwrap();
        assert_eq!(o.value, toml::Value::Integer(7));
        let o: Override = "experiment.walk.mode=two_dof".parse().unwrap();
        assert_eq!(o.value, toml::Value::String("two_dof".into()));
        assert!("noequals".parse::<Override>().is_err());
        assert!("a..b=1".parse::<Override>().is_err());
    }

    #[test]
    fn nested_override_creates_tables() {
        let mut t = toml::Table::new();
        set_path(&mut t, "a.b.c", toml::Value::Integer(1)).unwrap();
        assert_eq!(t["a"]["b"]["c"], toml::Value::Integer(1));
        assert!(set_path(&mut t, "a.b.c.d", toml::Value::Integer(1)).is_err());
    }

    #[test]
    fn from_parts_rejects_bad_experiment() {
        let e = Experiment::BenchHysteresis(HysteresisParams {
            axis: BenchAxis::Translation,
            ladder_top: -1.0,
            ladder_rungs: 0,
            hold_time: 1.0,
        });
        let err = Prepared::from_parts(e, PlantConfig::default(), ControllerConfig::default(), 1).unwrap_err();
        let Error::Invalid(v) = err else { panic!("{err}") };
        let keys: Vec<&str> = v.iter().map(|x| x.key.as_str()).collect();
        assert!(keys.contains(&"experiment.bench_hysteresis.ladder_top"));
        assert!(keys.contains(&"experiment.bench_hysteresis.ladder_rungs"));
    }
}
