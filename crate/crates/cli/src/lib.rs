//! Study orchestration for the `rndedt` command: manifests, training
//! cells, embedding dumps, metric tables, statistics and reports.

pub mod analysis;
pub mod collect;
pub mod error;
pub mod fixtures;
pub mod manifest;
pub mod report;
pub mod study;
pub mod train;

pub use analysis::{anova_exit_code, cmd_anova, cmd_correlate, Column, EnvAnova, EnvCorrelation};
pub use collect::{cmd_dump_embeddings, cmd_metrics, dump_study, ScoreAnchors, DEFAULT_REPETITIONS};
pub use error::{CliError, CliResult, EXIT_INVALID, EXIT_NUMERICAL};
pub use manifest::{Cell, RunManifest, SeedPolicy};
pub use report::{cmd_report, Format, Report};
pub use study::{cmd_sweep_rnd_depth, run_study, write_report, StudyOutput, SweepOutput, RESULTS_FILE};
pub use train::{cmd_train, CellStatus, TrainSummary};

/// 2 if any cell diverged, 1 if any failed otherwise, else 0.
pub fn train_exit_code(summary: &TrainSummary) -> i32 {
    summary
        .failures()
        .map(|o| match o.status {
            CellStatus::Failed { numerical: true, .. } => EXIT_NUMERICAL,
            _ => EXIT_INVALID,
        })
        .max()
        .unwrap_or(0)
}
