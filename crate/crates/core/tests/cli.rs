use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ankle_emu::characterization::BenchAxis;
use ankle_emu::cli::{self, ExperimentSpec, RunManifest, EXIT_INVALID, EXIT_OK, EXIT_UNREADABLE, EXIT_USAGE};
use ankle_emu::config::load_toml;
use ankle_emu::controller::{ControlMode, ControllerConfig};
use ankle_emu::plant::PlantConfig;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn experiment(name: &str) -> PathBuf {
    configs().join("experiments").join(format!("{name}.toml"))
}

fn emu(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ankle-emu")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_spec(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("spec.toml");
    std::fs::write(&path, text).unwrap();
    path
}

const STALL: &str = r#"
seed = 1
[experiment.bench_stall]
axis = "plantarflexion"
spring_rate = 400.0
start = -0.2
duration_s = 0.5
velocity_window_s = 0.02
"#;

#[test]
fn bundled_configs_are_the_defaults() {
    let plant: PlantConfig = load_toml(&configs().join("plant.toml")).unwrap();
    assert_eq!(plant, PlantConfig::default());
    let ctrl: ControllerConfig = load_toml(&configs().join("controller.toml")).unwrap();
    assert_eq!(ctrl, ControllerConfig::default());
    let suite = [
        ("torque_step", cli::torque_step()),
        ("translation_step", cli::translation_step()),
        ("torque_chirp", cli::torque_chirp()),
        ("translation_chirp", cli::translation_chirp()),
        ("pf_stall", cli::stall(BenchAxis::Plantarflexion)),
        ("translation_stall", cli::stall(BenchAxis::Translation)),
        ("pf_hysteresis", cli::hysteresis(BenchAxis::Plantarflexion)),
        ("translation_hysteresis", cli::hysteresis(BenchAxis::Translation)),
        ("walk_revolute_1dof", cli::walk(ControlMode::Revolute1DoF)),
        ("walk_two_dof", cli::walk(ControlMode::TwoDoF)),
    ];
    for (name, e) in suite {
        let spec: ExperimentSpec = load_toml(&experiment(name)).unwrap();
        assert_eq!(spec.experiment, e, "{name}");
    }
}

#[test]
fn bundled_specs_validate_clean() {
    for entry in std::fs::read_dir(configs().join("experiments")).unwrap() {
        let path = entry.unwrap().path();
        let o = emu(&["validate", path.to_str().unwrap()]);
        assert_eq!(code(&o), EXIT_OK, "{}: {}", path.display(), stderr(&o));
    }
}

#[test]
fn chirp_run_writes_bode_summary_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("chirp");
    let o = emu(&[
        "run",
        experiment("torque_chirp").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), EXIT_OK, "{}", stderr(&o));
    let bode = std::fs::read_to_string(out.join("bode.csv")).unwrap();
    assert!(bode.starts_with("frequency_hz,magnitude_db,phase_deg,coherence\n"));
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 2);
    assert!(summary.starts_with("bandwidth_hz,"));
    let m = RunManifest::read(&out).unwrap();
    m.verify(&out).unwrap();
    let mut listed: Vec<&str> = m.files.iter().map(|f| f.path.as_str()).collect();
    let mut present: Vec<String> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n != cli::MANIFEST_FILE)
        .collect();
    listed.sort();
    present.sort();
    assert_eq!(listed, present);
}

#[test]
fn negative_stiffness_is_rejected_naming_the_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let o = emu(&[
        "run",
        experiment("pf_stall").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--set",
        "plant.pf_series_stiffness_n_per_m=-1000",
    ]);
    assert_eq!(code(&o), EXIT_INVALID);
    let err = stderr(&o);
    assert!(err.contains("plant.pf_series_stiffness_n_per_m") && err.contains("positive"), "{err}");
    assert!(!dir.path().join(cli::MANIFEST_FILE).exists());
}

#[test]
fn unknown_keys_are_hard_errors() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), &format!("plant = \"builtin\"\ncontroller = \"builtin\"\ncolour = 3\n{STALL}"));
    let o = emu(&["validate", spec.to_str().unwrap()]);
    assert_eq!(code(&o), EXIT_INVALID);
    assert!(stderr(&o).contains("colour"), "{}", stderr(&o));

    let o = emu(&[
        "run",
        experiment("pf_stall").to_str().unwrap(),
        "--out",
        dir.path().join("x").to_str().unwrap(),
        "--set",
        "controller.torque_gains.ki=1",
    ]);
    assert_eq!(code(&o), EXIT_INVALID);
    assert!(stderr(&o).contains("ki"), "{}", stderr(&o));
}

#[test]
fn unreadable_is_distinct_from_invalid() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.toml");
    let o = emu(&["validate", missing.to_str().unwrap()]);
    assert_eq!(code(&o), EXIT_UNREADABLE);
    assert!(stderr(&o).starts_with("unreadable:"));

    let garbled = write_spec(dir.path(), "this is = = not toml");
    let o = emu(&["validate", garbled.to_str().unwrap()]);
    assert_eq!(code(&o), EXIT_INVALID);
    assert!(stderr(&o).starts_with("invalid:"));
}

#[test]
fn validate_lists_every_violation() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"
controller = "builtin"

[experiment.bench_hysteresis]
axis = "translation"
ladder_top = -5.0
ladder_rungs = 0
hold_time_s = 1.0
"#;
    let spec = write_spec(dir.path(), text);
    let o = emu(&["validate", spec.to_str().unwrap()]);
    assert_eq!(code(&o), EXIT_INVALID);
    let err = stderr(&o);
    for key in ["seed", "plant:", "missing plant configuration reference"] {
        assert!(err.contains(key), "{key} missing from {err}");
    }
}

#[test]
fn weak_unloading_spring_is_a_named_violation() {
    let dir = tempfile::tempdir().unwrap();
    let ctrl = ControllerConfig::default();
    let mut weak = ctrl.clone();
    weak.unloading_params.k = 100.0;
    assert!(weak.net_stance_work() < 0.0);
    std::fs::write(dir.path().join("ctrl.toml"), toml::to_string(&weak).unwrap()).unwrap();
    let spec = write_spec(dir.path(), &format!("plant = \"builtin\"\ncontroller = \"ctrl.toml\"\n{STALL}"));
    let o = emu(&["validate", spec.to_str().unwrap()]);
    assert_eq!(code(&o), EXIT_INVALID);
    assert!(stderr(&o).contains("controller.unloading_params"), "{}", stderr(&o));
    assert!(stderr(&o).contains("net-positive work"), "{}", stderr(&o));
}

#[test]
fn missing_config_file_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), &format!("plant = \"nowhere.toml\"\ncontroller = \"builtin\"\n{STALL}"));
    let o = emu(&["validate", spec.to_str().unwrap()]);
    assert_eq!(code(&o), EXIT_INVALID);
    assert!(stderr(&o).contains("plant: cannot read"), "{}", stderr(&o));
}

#[test]
fn separate_processes_give_identical_checksums() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), &format!("plant = \"builtin\"\ncontroller = \"builtin\"\n{STALL}"));
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let o = emu(&["run", spec.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", seed]);
        assert_eq!(code(&o), EXIT_OK, "{}", stderr(&o));
        RunManifest::read(&out).unwrap()
    };
    let a = run("a", "5");
    let b = run("b", "5");
    assert_eq!(a.files, b.files);
    assert_eq!(a.spec_sha256, b.spec_sha256);
    let c = run("c", "6");
    assert_ne!(a.spec_sha256, c.spec_sha256);
}

#[test]
fn run_directory_reproduces_itself() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let o = emu(&[
        "run",
        experiment("walk_two_dof").to_str().unwrap(),
        "--out",
        first.to_str().unwrap(),
        "--set",
        "experiment.walk.trial.n_strides=3",
    ]);
    assert_eq!(code(&o), EXIT_OK, "{}", stderr(&o));
    for f in ["trial_log.csv", "stance_traces.csv", "strides.csv", "profile.csv", "summary.csv"] {
        assert!(first.join(f).exists(), "{f}");
    }
    let second = dir.path().join("second");
    let o = emu(&[
        "run",
        first.join(cli::SPEC_FILE).to_str().unwrap(),
        "--out",
        second.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), EXIT_OK, "{}", stderr(&o));
    let (a, b) = (RunManifest::read(&first).unwrap(), RunManifest::read(&second).unwrap());
    assert_eq!(a.spec_sha256, b.spec_sha256);
    assert_eq!(a.files, b.files);
}

#[test]
fn unknown_suite_is_a_usage_error() {
    let o = emu(&["replicate-paper", "everything"]);
    assert_eq!(code(&o), EXIT_USAGE);
    assert!(stderr(&o).contains("possible values"));
}

#[test]
fn frictionless_suite_flags_hysteresis_out_of_band_low() {
    let dir = tempfile::tempdir().unwrap();
    let report = cli::replicate_paper(cli::Suite::Frictionless, dir.path()).unwrap();
    assert!(!report.any_failed());
    for metric in ["PF weight-ladder RMS error (N*m)", "translation weight-ladder RMS error (N)"] {
        assert_eq!(report.row(metric).unwrap().status, cli::Status::OutOfBandLow, "{metric}");
    }
    let table = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(table.matches("out-of-band-low").count(), 2);
}

#[test]
fn in_process_and_binary_runs_agree() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), &format!("plant = \"builtin\"\ncontroller = \"builtin\"\n{STALL}"));
    let prepared = cli::prepare(&spec, &[]).unwrap();
    let a = cli::execute(&prepared, &dir.path().join("a")).unwrap().manifest;
    let out = dir.path().join("b");
    let o = emu(&["run", spec.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), EXIT_OK, "{}", stderr(&o));
    let b = RunManifest::read(&out).unwrap();
    assert_eq!(a.files, b.files);
}
