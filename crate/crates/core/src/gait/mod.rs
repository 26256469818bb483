//! Closed-loop walking against a stiff virtual wearer, stride segmentation
//! and tracking statistics.

mod profile;
mod stats;
mod trial;

pub use profile::{
    double_hump, load_stride, save_stride, synth_stride, StrideProfile, StrideSample, StrideShape, PROFILE_COLUMNS,
    PROFILE_SCHEMA, STRIDE_SAMPLES,
};
pub use stats::{
    anterior_then_posterior, event_fidelity, max_stance_translation, segment_strides, stance_resample, tracking_stats,
    EventFidelity, Exclusion, Segmentation, StanceTraces, StrideStats, StrideWindow, TraceBand, DEFAULT_EXCLUSION,
    STANCE_POINTS,
};
pub use trial::{run_walking_trial, TrialLog, TrialSettings, LOG_COLUMNS};
