//! Experiment implementations. Each experiment resolves its parameters from
//! an [`ExperimentConfig`], computes typed results and renders them into
//! [`Artifacts`].

pub mod asymptotes;
pub mod elliptical;
pub mod hughop;
pub mod spherical;
pub mod svm;
pub mod validate;

use mcmccoup_core::couplings::CouplingKind;
use mcmccoup_core::ode::OdeKind;
use serde::Serialize;
use serde_json::Value;

use crate::config::{Experiment, ExperimentConfig};
use crate::error::{CliError, Result};
use crate::output::Artifacts;

/// Files and headline numbers of one run.
#[derive(Debug, Clone, Default)]
pub struct RunOutput {
    pub artifacts: Artifacts,
    pub summary: Value,
    /// Failed checks of the `validate` experiment.
    pub oracle_failures: usize,
}

/// Runs the experiment named in `config`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutput> {
    config.validate()?;
    match config.experiment()? {
        Experiment::OdeSpherical => spherical::run_ode(config),
        Experiment::McmcVsOde => spherical::run_mcmc_vs_ode(config),
        Experiment::AsymptoteSpherical => asymptotes::run_spherical(config),
        Experiment::AsymptoteElliptical => asymptotes::run_elliptical(config),
        Experiment::McmcElliptical => elliptical::run(config),
        Experiment::SvmConvergence => svm::run_convergence(config),
        Experiment::SvmBias => svm::run_bias(config),
        Experiment::SvmThresholdSweep => svm::run_threshold_sweep(config),
        Experiment::HugHopConvergence => hughop::run_convergence(config),
        Experiment::HopThresholdSweep => hughop::run_threshold_sweep(config),
        Experiment::Validate => validate::run(config),
    }
}

/// Seed of an independent sub-experiment, so that adding or reordering
/// configurations never changes the random numbers of the others.
pub fn sub_seed(seed: u64, label: &str, index: u64) -> u64 {
    // FNV-1a over the label, then a splitmix64 finaliser.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes().chain(index.to_le_bytes()) {
        h = (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3);
    }
    let mut z = seed ^ h;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// The ODE limit of an increment coupling.
pub fn ode_kind(kind: CouplingKind) -> Result<OdeKind> {
    match kind {
        CouplingKind::Crn => Ok(OdeKind::Crn),
        CouplingKind::Reflection => Ok(OdeKind::Reflection),
        CouplingKind::Gcrn => Ok(OdeKind::Gcrn),
        other => Err(CliError::validation("couplings", format!("{other} has no ODE limit; use crn, reflection or gcrn"))),
    }
}

pub(crate) fn require_kinds(kinds: &[CouplingKind], allowed: fn(&CouplingKind) -> bool, what: &str) -> Result<()> {
    match kinds.iter().find(|k| !allowed(k)) {
        Some(k) => Err(CliError::validation("couplings", format!("{k} is not supported here; {what}"))),
        None => Ok(()),
    }
}

pub(crate) fn to_summary<S: Serialize>(s: &S) -> Result<Value> {
    Ok(serde_json::to_value(s)?)
}

/// Mean and standard error of a sample.
pub(crate) fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Sample points 0, thin, 2·thin, … up to `end`.
pub(crate) fn grid(end: u64, thin: u64) -> Vec<u64> {
    (0..=end / thin).map(|i| i * thin).collect()
}
