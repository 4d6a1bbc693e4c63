//! Command-line experiments around the `pathlasso` library: dataset
//! generation, training, evaluation and penalty sweeps, each writing a
//! manifest that is enough to rerun it.

pub mod app;
pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod output;

pub use commands::{
    cmd_evaluate, cmd_generate, cmd_sweep, cmd_train, EvaluateSettings, GenerateSettings, Method, MetricsFile,
    RunSummary, SplitChoice, SweepOutcome, SweepSettings, TrainSettings,
};
pub use error::{CliError, Result};
pub use manifest::RunManifest;
