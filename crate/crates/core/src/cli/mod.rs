//! Command-line front end: argument parsing, run configuration, file formats
//! and the verbs themselves.

mod args;
pub mod checkpoint;
pub mod color;
mod commands;
pub mod config;
pub mod distfile;
pub mod report;

pub use args::{Cli, ColorInputs, Command, MultiInputs, Opts, PairInputs, SolverArg, SourceInput};
pub use checkpoint::{icnn_from_bytes, icnn_to_bytes, write_atomic, Checkpoint};
pub use color::{transfer, ImageDistribution, RgbImage};
pub use commands::{eval_pair_model, eval_predictions, format_context, mean_report, run};
pub use config::RunConfig;
