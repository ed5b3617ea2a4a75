//! Coupled Hug and Hop on the stochastic volatility posterior.

use mcmccoup_core::diagnostics::{run_replicates, HugHopLagged, ReplicateConfig};
use mcmccoup_core::kernels::{HopParams, HugParams};
use mcmccoup_core::targets::TargetModel;
use mcmccoup_core::RngStream;
use serde::Serialize;

use super::svm::{bounds, emit_convergence, emit_data, prior, replicates, svm_setup, svm_t, sweep_rows, trace_thin};
use super::svm::ConvergenceResult;
use super::{grid, sub_seed, to_summary, RunOutput};
use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::output::Artifacts;

pub const HUG: HugParams = HugParams { time: 0.5, bounces: 10 };
pub const HOP: HopParams = HopParams { lambda: 20.0, mu: 1.0 };
pub const DEFAULT_DELTA: f64 = 1e-4;

const LABEL: &str = "hug-hop";

/// Lagged coupled Hug and Hop replicates with Hop threshold `delta`.
pub fn hug_hop_convergence<F>(target: &TargetModel, delta: f64, init: F, cfg: ReplicateConfig) -> Result<ConvergenceResult>
where
    F: Fn(&mut RngStream) -> mcmccoup_core::Result<(Vec<f64>, Vec<f64>)> + Sync,
{
    let coupling = HugHopLagged { target, hug: HUG, hop: HOP, delta, init };
    let run = run_replicates(&coupling, &cfg)?;
    Ok(bounds(LABEL, Some(delta), run, &grid(cfg.max_iter, cfg.trace_thin.unwrap_or(1))))
}

#[derive(Serialize)]
struct Settings {
    hug_time: f64,
    hug_bounces: usize,
    hop_lambda: f64,
    hop_mu: f64,
    delta: f64,
    lag: u64,
    max_iter: u64,
}

fn settings(delta: f64, lag: u64, max_iter: u64) -> Settings {
    Settings { hug_time: HUG.time, hug_bounces: HUG.bounces, hop_lambda: HOP.lambda, hop_mu: HOP.mu, delta, lag, max_iter }
}

fn single_delta(cfg: &ExperimentConfig) -> Result<f64> {
    match cfg.deltas.as_deref() {
        None => Ok(DEFAULT_DELTA),
        Some([d]) => Ok(*d),
        Some(_) => Err(CliError::validation("deltas", "hug-hop-convergence takes a single threshold")),
    }
}

pub fn run_convergence(cfg: &ExperimentConfig) -> Result<RunOutput> {
    if cfg.couplings.is_some() {
        return Err(CliError::validation("couplings", "Hug and Hop fixes its own coupling"));
    }
    let seed = cfg.seed()?;
    let setup = svm_setup(svm_t(cfg), seed, None)?;
    let delta = single_delta(cfg)?;
    let lag = cfg.lag.unwrap_or(cfg.scale.pick(6_000, 1_000));
    let max_iter = cfg.max_iter.unwrap_or(lag * 10);
    if max_iter <= lag {
        return Err(CliError::validation("max_iter", format!("budget must exceed the lag {lag}")));
    }
    let rc = ReplicateConfig {
        lag,
        replicates: replicates(cfg),
        max_iter,
        seed: sub_seed(seed, "hug-hop", 0),
        trace_thin: Some(trace_thin(lag, 20)),
    };
    let result = hug_hop_convergence(&setup.target, delta, prior(&setup.target), rc)?;
    let mut art = Artifacts::default();
    emit_data(&mut art, &setup)?;
    let summaries = emit_convergence(&mut art, std::slice::from_ref(&result))?;
    art.json("settings.json", &settings(delta, lag, max_iter))?;
    let summary = to_summary(&serde_json::json!({ "settings": settings(delta, lag, max_iter), "result": summaries }))?;
    Ok(RunOutput { artifacts: art, summary, oracle_failures: 0 })
}

pub fn default_deltas() -> Vec<f64> {
    vec![1e-6, 1e-5, 1e-4, 1e-3, 1e-2]
}

pub fn run_threshold_sweep(cfg: &ExperimentConfig) -> Result<RunOutput> {
    if cfg.couplings.is_some() {
        return Err(CliError::validation("couplings", "Hug and Hop fixes its own coupling"));
    }
    let seed = cfg.seed()?;
    let setup = svm_setup(svm_t(cfg), seed, None)?;
    let deltas = cfg.deltas.clone().unwrap_or_else(default_deltas);
    let lag = cfg.lag.unwrap_or(1);
    let max_iter = cfg.max_iter.unwrap_or(lag + cfg.scale.pick(100_000, 10_000));
    let mut results = Vec::new();
    for (i, &delta) in deltas.iter().enumerate() {
        let rc = ReplicateConfig {
            lag,
            replicates: replicates(cfg),
            max_iter,
            seed: sub_seed(seed, "hop-threshold", i as u64),
            trace_thin: None,
        };
        results.push((delta, hug_hop_convergence(&setup.target, delta, prior(&setup.target), rc)?));
    }
    let rows = sweep_rows(&results);
    let mut art = Artifacts::default();
    emit_data(&mut art, &setup)?;
    art.csv("threshold_sweep.csv", &rows)?;
    let summary = to_summary(&serde_json::json!({ "lag": lag, "max_iter": max_iter, "sweep": rows }))?;
    Ok(RunOutput { artifacts: art, summary, oracle_failures: 0 })
}
