//! Bench characterization: weight-ladder load estimation, stall sweeps,
//! square-wave step tests and chirp frequency responses, plus the signal
//! analysis they rely on.

mod bench;
mod frf;
mod signals;

pub use bench::{
    run_chirp_test, run_hysteresis_test, run_stall_sweep, run_step_test, weight_ladder, BenchAxis, ChirpRun,
    ChirpSpec, HysteresisReport, PassThrough, StallSetup, StallSweepReport, StepRun, SystemUnderTest, TorqueBench,
    TranslationBench, HYSTERESIS_PF_START,
};
pub use frf::{bandwidth, estimate_frf, Bandwidth, BandwidthCriterion, FrequencyResponse, WELCH_SEGMENTS};
pub use signals::{
    chirp_frequency, chirp_phase, fall_time_90, log_chirp, rise_time_90, step_metrics, time_to_90, SquareWave,
    StepMetrics, SETTLE_BAND, SETTLE_TIME,
};
