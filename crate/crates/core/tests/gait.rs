use ankle_emu::controller::{ControlMode, ControllerConfig};
use ankle_emu::gait::{
    load_stride, run_walking_trial, save_stride, segment_strides, synth_stride, tracking_stats, StrideShape,
    TrialLog, TrialSettings, DEFAULT_EXCLUSION, PROFILE_COLUMNS, PROFILE_SCHEMA, STRIDE_SAMPLES,
};
use ankle_emu::plant::PlantConfig;
use ankle_emu::Error;

fn write_profile(path: &std::path::Path, rows: usize, theta: impl Fn(f64) -> f64) {
    let mut text = format!("{PROFILE_SCHEMA}, stride_duration_s=1.1, walking_speed_m_per_s=1\n");
    text.push_str(&PROFILE_COLUMNS.join(","));
    text.push('\n');
    for i in 0..rows {
        let p = i as f64 / (rows - 1) as f64;
        let marker = u8::from(i == 0);
        text.push_str(&format!("{p},{},0,0,0,{marker}\n", theta(p)));
    }
    std::fs::write(path, text).unwrap();
}

#[test]
fn profile_save_load_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("stride.csv");
    let plant = PlantConfig::default();
    let profile = synth_stride(1.3, &StrideShape::default()).unwrap();
    save_stride(&profile, &path).unwrap();
    let back = load_stride(&path, &plant).unwrap();
    assert_eq!(back, profile);
}

#[test]
fn dense_profile_is_resampled_and_flagged() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("dense.csv");
    let theta = |p: f64| 0.1 * (2.0 * std::f64::consts::PI * p).sin();
    write_profile(&path, 101, theta);
    let profile = load_stride(&path, &PlantConfig::default()).unwrap();
    assert_eq!(profile.samples.len(), STRIDE_SAMPLES);
    assert!(profile.resampled);
    // 101 evenly spaced rows contain every 51-point knot exactly.
    for s in &profile.samples {
        assert!((s.theta_ref - theta(s.stride_progress)).abs() < 1e-12);
    }
}

#[test]
fn plantarflexion_past_limit_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("steep.csv");
    let peak = 45f64.to_radians();
    write_profile(&path, 51, |p| peak * (std::f64::consts::PI * p).sin());
    let err = load_stride(&path, &PlantConfig::default()).unwrap_err();
    let Error::Profile(list) = err else { panic!("{err}") };
    assert!(list.iter().any(|m| m.contains("row")), "{list:?}");
}

#[test]
fn frictionless_single_stride_tracks_closely() {
    let plant = PlantConfig::default().frictionless();
    let profile = synth_stride(1.0, &StrideShape::default()).unwrap();
    let settings = TrialSettings {
        n_strides: 1,
        max_strides: 3,
        ..TrialSettings::default()
    };
    let log = run_walking_trial(&plant, &ControllerConfig::default(), &profile, ControlMode::Revolute1DoF, &settings, 3)
        .unwrap();
    let seg = segment_strides(&log);
    assert_eq!(seg.valid.len(), 1);
    let stats = tracking_stats(&log, &seg.valid, DEFAULT_EXCLUSION).unwrap();
    assert!(stats.torque_rms < 1.0, "{}", stats.torque_rms);
}

#[test]
fn fixed_seed_trials_are_identical_and_logs_persist_exactly() {
    let plant = PlantConfig::default();
    let ctrl = ControllerConfig::default();
    let profile = synth_stride(1.0, &StrideShape::default()).unwrap();
    let settings = TrialSettings {
        n_strides: 4,
        max_strides: 8,
        ..TrialSettings::default()
    };
    let a = run_walking_trial(&plant, &ctrl, &profile, ControlMode::TwoDoF, &settings, 11).unwrap();
    let b = run_walking_trial(&plant, &ctrl, &profile, ControlMode::TwoDoF, &settings, 11).unwrap();
    assert_eq!(a, b);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("log.csv");
    a.write(&path).unwrap();
    let back = TrialLog::read(&path).unwrap();
    assert_eq!(back, a);
    let stats = |l: &TrialLog| tracking_stats(l, &segment_strides(l).valid, DEFAULT_EXCLUSION).unwrap();
    assert_eq!(stats(&back), stats(&a));
}

#[test]
fn invalid_settings_are_rejected_before_running() {
    let profile = synth_stride(1.0, &StrideShape::default()).unwrap();
    let settings = TrialSettings {
        n_strides: 10,
        max_strides: 5,
        ..TrialSettings::default()
    };
    let err = run_walking_trial(
        &PlantConfig::default(),
        &ControllerConfig::default(),
        &profile,
        ControlMode::TwoDoF,
        &settings,
        1,
    )
    .unwrap_err();
    assert!(err.to_string().contains("max_strides"), "{err}");
}
