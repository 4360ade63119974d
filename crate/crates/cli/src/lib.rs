//! Driver for data generation, off-policy training, online evaluation and
//! bidding-rule sweeps. The `ram` binary is a thin argument parser over
//! these functions.

pub mod commands;
pub mod config;
pub mod error;

pub use commands::{eval, gen_data, sweep, train, DataSummary, EvalRow};
pub use config::{PolicyKind, RunConfig, SweepParam};
pub use error::{CliError, Result};
