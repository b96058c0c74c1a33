//! Pipeline commands behind the `iafmc` binary: `prepare`, `train`, `eval`
//! and `sweep`. Each command writes into its own run directory.

pub mod commands;
pub mod config;
pub mod error;

pub use commands::{
    cmd_eval, cmd_prepare, cmd_sweep, cmd_train, create_run_dir, run_sweep, PrepareArgs, PrepareSummary, SweepAxis,
    SweepRow, TrainSummary,
};
pub use config::RunConfig;
pub use error::CliError;
