//! Configuration files, solver orchestration and tabular output.

pub mod config;
pub mod output;
pub mod run;

pub use config::{parse_config, parse_config_str, Overrides, ProblemConfig, SolverMode};
pub use run::{run, RunOutcome};
