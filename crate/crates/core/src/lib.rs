//! Emulator for a cable-driven ankle-foot prosthesis with powered plantarflexion
//! and anterior-posterior (AP) socket translation.
//!
//! The crate is split the same way the device is:
//!
//! * [`plant`]: fixed-step dynamics of the mechanism, its Bowden-cable
//!   transmissions and the quantized sensor suite.
//! * [`controller`]: gait-event detection, the stance/swing state machine,
//!   per-phase impedance targets and the low-level PD loops.
//! * [`characterization`]: bench protocols (weight ladder, stall sweep, step and
//!   chirp tests) and the signal analysis behind them.
//! * [`gait`]: stride profiles, closed-loop walking trials and tracking statistics.
//! * [`cli`]: experiment specs, run manifests and the replication suite.

pub mod characterization;
pub mod cli;
pub mod config;
pub mod controller;
pub mod csvio;
pub mod error;
pub mod gait;
pub mod plant;

pub use error::{Error, Result, Violation};
