//! Experiment runner: configuration, per-seed execution and reporting.

mod config;
mod report;
mod run;

pub use config::{default_sigma_grid, DatasetSource, ModelConfig, ModelSpec, RunConfig, SplitConfig};
pub use report::{long_rows, orientation, report, ReportSummary, GROUP_LEVEL};
pub use run::{load_outcomes, run_experiment, RunOutput, RunRecord, SeedOutcome, SkippedMethod, INDEX_FILE, RECORDS_DIR};
