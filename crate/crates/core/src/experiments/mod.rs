//! Reproducible experiment runs driven by JSON configuration files.
//!
//! [`run_experiment`] dispatches on the configured experiment, writes every
//! artifact into the output directory and always finishes with a
//! `summary.json`, including when the run fails with an error.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod init;

pub use artifacts::{read_summary, Check, RunArtifacts, RunStatus, Summary};
pub use config::{ExperimentConfig, ExperimentKind, GameSpec};
pub use init::{InitComponent, InitSpec};

use crate::error::Result;

/// Runs one experiment. Errors inside the experiment are recorded in the
/// summary (status `error`); only failures to create the output directory or
/// to write the summary itself are returned.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Summary> {
    let mut art = RunArtifacts::create(&cfg.output_dir)?;
    let outcome = match cfg.experiment {
        ExperimentKind::TwoStrategies => commands::two_strategies(cfg, &mut art),
        ExperimentKind::Grazing => commands::grazing(cfg, &mut art),
        ExperimentKind::RpsPeriodic => commands::rps_periodic(cfg, &mut art),
        ExperimentKind::FolkCheck => commands::folk_check(cfg, &mut art),
        ExperimentKind::MeanfieldVsReplicator => commands::meanfield_vs_replicator(cfg, &mut art),
        ExperimentKind::MicroFreeRun => commands::micro_free_run(cfg, &mut art),
    };
    art.finish(cfg, outcome.as_ref().err())
}
