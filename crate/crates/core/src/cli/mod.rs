//! Command-line front end: experiment specs, run manifests and the
//! replication suite.
//!
//! Exit codes: 0 success, 1 the experiment ran but failed (or a suite row
//! failed), 2 usage error, 3 invalid spec or configuration, 4 unreadable input.

mod manifest;
mod replicate;
mod run;
mod spec;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::error::Error;

pub use manifest::{sha256_hex, FileEntry, RunManifest, MANIFEST_FILE, MANIFEST_VERSION};
pub use replicate::{
    classify, hysteresis, replicate_paper, stall, torque_chirp, torque_step, translation_chirp, translation_step,
    walk, Report, Row, Status, Suite, SUITE_SEED,
};
pub use run::{execute, RunOutcome, CONTROLLER_FILE, PLANT_FILE, PROFILE_FILE, SPEC_FILE, SUMMARY_FILE};
pub use spec::{
    prepare, ChirpParams, Experiment, ExperimentSpec, HysteresisParams, Override, Prepared, StepParams, WalkParams,
    BUILTIN,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INVALID: i32 = 3;
pub const EXIT_UNREADABLE: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "ankle-emu", version, about = "Cable-driven ankle prosthesis emulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one experiment spec and write its outputs and manifest.
    Run {
        spec: PathBuf,
        /// Override a spec, `plant.` or `controller.` key, e.g. `plant.bowden_friction_coeff=0`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<Override>,
        /// Output directory; defaults to the spec's `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check a spec and everything it references without running it.
    Validate { spec: PathBuf },
    /// Run the characterization and walking suite against the calibration bands.
    ReplicatePaper {
        suite: Suite,
        #[arg(long, default_value = "replicate")]
        out: PathBuf,
    },
}

fn error_code(e: &Error) -> i32 {
    match e {
        Error::Unreadable { .. } => EXIT_UNREADABLE,
        Error::Parse { .. } | Error::Invalid(_) | Error::Config(_) | Error::Profile(_) => EXIT_INVALID,
        _ => EXIT_FAILED,
    }
}

fn report_error(err: &mut dyn Write, e: &Error) -> i32 {
    let class = match error_code(e) {
        EXIT_UNREADABLE => "unreadable",
        EXIT_INVALID => "invalid",
        _ => "error",
    };
    let _ = writeln!(err, "{class}: {e}");
    error_code(e)
}

/// Parses `args` (program name first) and executes the command.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{}", e.render());
                return EXIT_USAGE;
            }
            let _ = write!(out, "{}", e.render());
            return EXIT_OK;
        }
    };
    match cli.command {
        Command::Validate { spec } => match prepare(&spec, &[]) {
            Ok(p) => {
                let _ = writeln!(out, "ok: {} ({})", spec.display(), p.spec.experiment.kind());
                EXIT_OK
            }
            Err(e) => report_error(err, &e),
        },
        Command::Run { spec, set, out: dir, seed } => {
            let mut overrides = set;
            if let Some(s) = seed {
                overrides.push(Override {
                    key: "seed".into(),
                    value: toml::Value::Integer(s as i64),
                });
            }
            let prepared = match prepare(&spec, &overrides) {
                Ok(p) => p,
                Err(e) => return report_error(err, &e),
            };
            let Some(dir) = dir.or_else(|| prepared.spec.output_dir.clone()) else {
                let _ = writeln!(err, "invalid: output_dir: not set in the spec and no --out given");
                return EXIT_INVALID;
            };
            match execute(&prepared, &dir) {
                Ok(o) => {
                    for (k, v) in &o.metrics {
                        let _ = writeln!(out, "{k} = {v}");
                    }
                    let _ = writeln!(out, "wrote {} files and {MANIFEST_FILE} to {}", o.manifest.files.len(), dir.display());
                    match o.failure {
                        Some(why) => {
                            let _ = writeln!(err, "failed: {why}");
                            EXIT_FAILED
                        }
                        None => EXIT_OK,
                    }
                }
                Err(e) => report_error(err, &e),
            }
        }
        Command::ReplicatePaper { suite, out: dir } => match replicate_paper(suite, &dir) {
            Ok(report) => {
                let _ = write!(out, "{report}");
                let _ = writeln!(out, "summary written to {}", dir.join("summary.csv").display());
                if report.any_failed() {
                    EXIT_FAILED
                } else {
                    EXIT_OK
                }
            }
            Err(e) => report_error(err, &e),
        },
    }
}
