//! Command-line driver for the signature volatility model: market
//! generation, payoff fitting, calibration, pricing and simulation, each a
//! deterministic file-to-file stage configured by one JSON document.

pub mod commands;
pub mod config;
pub mod error;

pub use commands::{run, COMMANDS};
pub use config::{Overrides, RunConfig};
pub use error::{CliError, CliResult};
