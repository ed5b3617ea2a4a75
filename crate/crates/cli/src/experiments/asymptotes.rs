//! Long-run scaled distances of the ODE limits as functions of the step
//! parameter and the ellipticity.

use mcmccoup_core::fixed_points::{solve_fixed_point, sweep_asymptotes, write_sweep_csv, SweepRow};
use mcmccoup_core::ode::OdeKind;

use super::RunOutput;
use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::output::Artifacts;

/// Evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

pub fn default_spherical_ls() -> Vec<f64> {
    linspace(0.1, 6.0, 60)
}

pub fn default_elliptical_ls() -> Vec<f64> {
    linspace(0.5, 5.0, 10)
}

pub fn default_epsilons() -> Vec<f64> {
    vec![1.1, 1.5, 2.0, 3.0, 5.0, 625.0 / 96.0, 10.0, 25.0, 50.0]
}

fn ode_kinds(cfg: &ExperimentConfig, default: &[OdeKind]) -> Result<Vec<OdeKind>> {
    match &cfg.couplings {
        None => Ok(default.to_vec()),
        Some(names) => names
            .iter()
            .map(|n| {
                let k: OdeKind = n.parse().map_err(|e: mcmccoup_core::Error| CliError::validation("couplings", e.to_string()))?;
                if k == OdeKind::Optimal {
                    return Err(CliError::validation("couplings", "the optimal coupling has no fixed point here"));
                }
                Ok(k)
            })
            .collect(),
    }
}

fn emit(rows: &[SweepRow], summary: serde_json::Value) -> Result<RunOutput> {
    let mut art = Artifacts::default();
    art.with_writer("asymptotes.csv", |w| write_sweep_csv(rows, w))?;
    Ok(RunOutput { artifacts: art, summary, oracle_failures: 0 })
}

pub fn run_spherical(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let ls = cfg.l.clone().unwrap_or_else(default_spherical_ls);
    let kinds = ode_kinds(cfg, &[OdeKind::Crn, OdeKind::Reflection, OdeKind::Gcrn])?;
    let mut rows = Vec::new();
    for k in kinds {
        rows.extend(sweep_asymptotes(k, &ls, &[1.0])?);
    }
    let at = solve_fixed_point(OdeKind::Crn, 2.38, 1.0)?;
    emit(&rows, serde_json::json!({ "crn_s_inf_at_2.38": at.s_inf, "rows": rows.len() }))
}

pub fn run_elliptical(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let ls = cfg.l.clone().unwrap_or_else(default_elliptical_ls);
    let eps = cfg.epsilons.clone().unwrap_or_else(default_epsilons);
    let kinds = ode_kinds(cfg, &[OdeKind::Crn, OdeKind::Reflection])?;
    let mut rows = Vec::new();
    for k in kinds {
        rows.extend(sweep_asymptotes(k, &ls, &eps)?);
    }
    emit(&rows, serde_json::json!({ "rows": rows.len() }))
}
