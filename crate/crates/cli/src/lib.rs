//! Config-driven experiment runner for coupled random walk Metropolis
//! chains. Every run is deterministic given its config and seed and writes
//! CSV artifacts plus a replayable manifest.

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;

use std::path::PathBuf;

pub use config::{Experiment, ExperimentConfig, Scale, Start};
pub use error::{CliError, Result};
pub use experiments::{run_experiment, RunOutput};

/// Output directory used when the config names none.
pub fn default_out_dir(experiment: Experiment) -> PathBuf {
    PathBuf::from("out").join(experiment.name())
}

/// Runs the experiment and writes its artifacts. Outputs are written even
/// when oracle checks fail, so that failures can be inspected; the error is
/// returned afterwards.
pub fn execute(config: &ExperimentConfig) -> Result<(RunOutput, Vec<PathBuf>)> {
    let out = run_experiment(config)?;
    let dir = config.out.clone().unwrap_or_else(|| default_out_dir(config.experiment.expect("validated")));
    let paths = output::emit(&dir, &out.artifacts, config, &out.summary)?;
    if out.oracle_failures > 0 {
        return Err(CliError::OracleFailure { failed: out.oracle_failures });
    }
    Ok((out, paths))
}
