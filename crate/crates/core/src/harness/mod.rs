//! Experiment execution: trials, ground-truth audits, bound checks and
//! seed sweeps.

pub mod bounds;
pub mod config;
pub mod invariants;
pub mod sweep;
pub mod trial;

use std::path::PathBuf;

pub use bounds::{verify_bounds, BoundCheck, BoundParams};
pub use config::{Experiment, SweepFile};
pub use invariants::{Check, InvariantResult};
pub use sweep::{plan_trial, sweep, write_outputs, SweepReport, SweepResult, TrialRecord};
pub use trial::{run_trial, LearnerSpec, TranscriptRow, Trial, TrialReport, TrialSpec};

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "RDFF_OUTPUT_DIR";

/// `$RDFF_OUTPUT_DIR`, else `rdff-out` in the working directory.
pub fn default_output_dir() -> PathBuf {
    std::env::var_os(OUTPUT_DIR_ENV).map_or_else(|| PathBuf::from("rdff-out"), PathBuf::from)
}
