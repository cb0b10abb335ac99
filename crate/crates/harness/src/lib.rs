//! Experiment harness for sequential rank-1 regression: configs, CSV output,
//! matrix files and the `seqrank` command line.

pub mod cli;
pub mod config;
pub mod error;
pub mod experiments;
pub mod matrix_io;
pub mod table;

pub use cli::cli_main;
pub use config::{ExperimentConfig, ExperimentKind};
pub use error::{HarnessError, Result};
pub use experiments::{run_experiment, ExperimentOutput};
