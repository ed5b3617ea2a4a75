//! Stochastic volatility posterior: lagged convergence bounds, bias bounds
//! against its Laplace approximation and the two-scale threshold sweep.

use mcmccoup_core::couplings::{CoupledChainState, CoupledRwm, CouplingKind};
use mcmccoup_core::diagnostics::{
    gelbrich_bound, run_replicates, stationary_bias_bound, tv_bound_curve, w2_bound_curve, write_bound_curves_csv,
    Band, BoundCurve, ReplicateConfig, ReplicateRun, RwmLagged,
};
use mcmccoup_core::kernels::RwmChain;
use mcmccoup_core::targets::{laplace_fit, svm_simulate, LaplaceOptions, SvmData, SvmParams, SvmPosterior, TargetModel};
use mcmccoup_core::RngStream;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use super::{grid, mean_se, require_kinds, sub_seed, to_summary, RunOutput};
use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::output::Artifacts;

/// Optimal-scaling constant used to set h from the Laplace precision.
pub const L1_OPT: f64 = 2.38;
/// Curve points per lag in the bound curves.
const CURVE_POINTS_PER_LAG: u64 = 20;
/// Fraction of each coupled bias run discarded before averaging.
const BIAS_DISCARD: f64 = 0.25;
const BIAS_THIN: u64 = 10;

/// Simulated data, posterior target, its Laplace approximation and the
/// step size used by every RWM kernel on it.
#[derive(Debug, Clone)]
pub struct SvmSetup {
    pub data: SvmData,
    pub target: TargetModel,
    pub laplace: TargetModel,
    pub h: f64,
}

/// Simulates T observations and fits the Laplace approximation. Without an
/// explicit `h` the step is h = 2.38/√tr Ω̂ with Ω̂ the Laplace precision.
pub fn svm_setup(t_len: usize, seed: u64, h: Option<f64>) -> Result<SvmSetup> {
    let params = SvmParams::default();
    let data = svm_simulate(t_len, params, &mut RngStream::new(sub_seed(seed, "svm-data", t_len as u64), 0))?;
    let target = TargetModel::Svm(SvmPosterior::new(data.y.clone(), params)?);
    let laplace = laplace_fit(&target, &vec![0.0; t_len], &LaplaceOptions::default())?;
    let h = match h {
        Some(h) => h,
        None => {
            let TargetModel::Dense(g) = &laplace else {
                return Err(CliError::Serialize("Laplace fit did not return a dense Gaussian".into()));
            };
            L1_OPT / g.precision().trace().sqrt()
        }
    };
    Ok(SvmSetup { data, target, laplace, h })
}

pub(crate) fn prior(target: &TargetModel) -> impl Fn(&mut RngStream) -> mcmccoup_core::Result<(Vec<f64>, Vec<f64>)> + Sync + Copy + '_ {
    move |rng: &mut RngStream| match target {
        TargetModel::Svm(p) => Ok((p.sample_prior(rng), p.sample_prior(rng))),
        _ => target.sample(rng).and_then(|x| Ok((x, target.sample(rng)?))),
    }
}

/// Largest divisor of `lag` not exceeding lag/points, so that curve times
/// and every lag shift land on recorded trace points.
pub fn trace_thin(lag: u64, points: u64) -> u64 {
    let cap = (lag / points).max(1);
    (1..=cap).rev().find(|t| lag % t == 0).unwrap_or(1)
}

/// Meeting times and bound curves of one coupling.
#[derive(Debug, Clone)]
pub struct ConvergenceResult {
    /// Coupling name used in output tables.
    pub label: String,
    /// Coupling threshold δ, when the coupling has one.
    pub delta: Option<f64>,
    pub run: ReplicateRun,
    /// Absent when every replicate was capped.
    pub tv: Option<BoundCurve>,
    pub w2: Option<BoundCurve>,
}

impl ConvergenceResult {
    pub fn capped_fraction(&self) -> f64 {
        self.run.n_capped() as f64 / self.run.records.len() as f64
    }
}

/// Lagged replicates of each coupling on `target` started from `init`.
pub fn lagged_convergence<F>(
    target: &TargetModel,
    h: f64,
    couplings: &[CouplingKind],
    init: F,
    base: ReplicateConfig,
) -> Result<Vec<ConvergenceResult>>
where
    F: Fn(&mut RngStream) -> mcmccoup_core::Result<(Vec<f64>, Vec<f64>)> + Sync + Copy,
{
    let t_grid = grid(base.max_iter, base.trace_thin.unwrap_or(1));
    couplings
        .iter()
        .enumerate()
        .map(|(i, &kind)| {
            let coupling = RwmLagged { target, kind, h, init };
            let cfg = ReplicateConfig { seed: sub_seed(base.seed, kind.name(), i as u64), ..base };
            let run = run_replicates(&coupling, &cfg)?;
            let delta = match kind {
                CouplingKind::TwoScale { delta } => Some(delta),
                _ => None,
            };
            Ok(bounds(kind.name(), delta, run, &t_grid))
        })
        .collect()
}

pub(crate) fn bounds(label: &str, delta: Option<f64>, run: ReplicateRun, t_grid: &[u64]) -> ConvergenceResult {
    let tv = tv_bound_curve(&run.records, t_grid).ok();
    let w2 = w2_bound_curve(&run, t_grid).ok();
    ConvergenceResult { label: label.to_string(), delta, run, tv, w2 }
}

#[derive(Serialize)]
pub(crate) struct MeetingRow<'a> {
    pub coupling: &'a str,
    pub delta: Option<f64>,
    pub replicate: usize,
    pub tau: u64,
    pub lag: u64,
    pub capped: bool,
}

#[derive(Serialize)]
pub(crate) struct DistanceRow<'a> {
    pub coupling: &'a str,
    pub replicate: usize,
    pub s: u64,
    pub distance_sq: f64,
}

#[derive(Debug, Clone, Serialize)]
pub(crate) struct ConvergenceSummary {
    pub coupling: String,
    pub delta: Option<f64>,
    pub replicates: usize,
    pub capped: usize,
    pub mean_tau: Option<f64>,
    pub tv_below_0_01_at: Option<u64>,
    pub w2sq_below_0_01_at: Option<u64>,
}

/// Writes meetings, distance traces and one bound-curve file per coupling.
pub(crate) fn emit_convergence(art: &mut Artifacts, results: &[ConvergenceResult]) -> Result<Vec<ConvergenceSummary>> {
    let mut meetings = Vec::new();
    let mut traces = Vec::new();
    let mut summaries = Vec::new();
    for r in results {
        let (name, delta) = (r.label.as_str(), r.delta);
        for m in &r.run.records {
            meetings.push(MeetingRow { coupling: name, delta, replicate: m.replicate, tau: m.tau, lag: m.lag, capped: m.capped });
        }
        for (rep, tr) in r.run.traces.iter().enumerate() {
            traces.extend(tr.values.iter().enumerate().map(|(i, &v)| DistanceRow {
                coupling: name,
                replicate: rep,
                s: i as u64 * tr.thin,
                distance_sq: v,
            }));
        }
        let curves: Vec<BoundCurve> = r.tv.iter().chain(&r.w2).cloned().collect();
        if !curves.is_empty() {
            let shared = results.iter().filter(|o| o.label == r.label).count() > 1;
            let file = match delta {
                Some(d) if shared => format!("bound_curves_{name}_delta{d}.csv"),
                _ => format!("bound_curves_{name}.csv"),
            };
            art.with_writer(&file, |w| write_bound_curves_csv(&curves, w))?;
        }
        let taus: Vec<f64> = r.run.records.iter().filter(|m| !m.capped).map(|m| m.tau as f64).collect();
        summaries.push(ConvergenceSummary {
            coupling: r.label.clone(),
            delta: r.delta,
            replicates: r.run.records.len(),
            capped: r.run.n_capped(),
            mean_tau: (!taus.is_empty()).then(|| mean_se(&taus).0),
            tv_below_0_01_at: r.tv.as_ref().and_then(|c| c.first_below(0.01)),
            w2sq_below_0_01_at: r.w2.as_ref().and_then(|c| c.first_below(0.01)),
        });
    }
    art.csv("meetings.csv", &meetings)?;
    art.csv("distance_traces.csv", &traces)?;
    art.csv("convergence_summary.csv", &summaries)?;
    Ok(summaries)
}

#[derive(Serialize)]
struct DataRow {
    t: usize,
    x: f64,
    y: f64,
}

pub(crate) fn emit_data(art: &mut Artifacts, setup: &SvmSetup) -> Result<()> {
    let rows: Vec<DataRow> =
        setup.data.x.iter().zip(&setup.data.y).enumerate().map(|(t, (&x, &y))| DataRow { t: t + 1, x, y }).collect();
    art.csv("svm_data.csv", &rows)
}

pub(crate) fn svm_t(cfg: &ExperimentConfig) -> usize {
    cfg.svm_t.unwrap_or(cfg.scale.pick(360, 50))
}

pub(crate) fn replicates(cfg: &ExperimentConfig) -> usize {
    cfg.replicates.unwrap_or(cfg.scale.pick(100, 20))
}

/// Desk budgets are ten times the lag; paper budgets five times.
fn budget(cfg: &ExperimentConfig, lag: u64) -> u64 {
    cfg.max_iter.unwrap_or(lag * cfg.scale.pick(5, 10))
}

/// Lagged meeting runs of the configured couplings on the configured SVM
/// posterior.
pub fn convergence(cfg: &ExperimentConfig) -> Result<(SvmSetup, ReplicateConfig, Vec<ConvergenceResult>)> {
    let couplings = cfg.coupling_kinds(&["two-scale:0.1", "crn", "reflection"])?;
    let seed = cfg.seed()?;
    let setup = svm_setup(svm_t(cfg), seed, cfg.h)?;
    let lag = cfg.lag.unwrap_or(cfg.scale.pick(2_000_000, 30_000));
    let base = ReplicateConfig {
        lag,
        replicates: replicates(cfg),
        max_iter: budget(cfg, lag),
        seed,
        trace_thin: Some(trace_thin(lag, CURVE_POINTS_PER_LAG)),
    };
    if base.max_iter <= lag {
        return Err(CliError::validation("max_iter", format!("budget must exceed the lag {lag}")));
    }
    let results = lagged_convergence(&setup.target, setup.h, &couplings, prior(&setup.target), base)?;
    Ok((setup, base, results))
}

pub fn run_convergence(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let (setup, base, results) = convergence(cfg)?;
    let mut art = Artifacts::default();
    emit_data(&mut art, &setup)?;
    let summaries = emit_convergence(&mut art, &results)?;
    let summary = to_summary(&serde_json::json!({ "h": setup.h, "lag": base.lag, "max_iter": base.max_iter, "couplings": summaries }))?;
    Ok(RunOutput { artifacts: art, summary, oracle_failures: 0 })
}

/// Moment accumulator for the X marginal.
#[derive(Debug, Clone)]
struct Moments {
    n: usize,
    sum: DVector<f64>,
    outer: DMatrix<f64>,
}

impl Moments {
    fn new(d: usize) -> Self {
        Self { n: 0, sum: DVector::zeros(d), outer: DMatrix::zeros(d, d) }
    }

    fn add(&mut self, x: &[f64]) {
        let v = DVector::from_column_slice(x);
        self.outer.ger(1.0, &v, &v, 1.0);
        self.sum += v;
        self.n += 1;
    }

    fn merge(mut self, other: Self) -> Self {
        self.n += other.n;
        self.sum += other.sum;
        self.outer += other.outer;
        self
    }

    fn mean_cov(&self) -> (Vec<f64>, DMatrix<f64>) {
        let n = self.n as f64;
        let mean = &self.sum / n;
        let cov = &self.outer / n - &mean * mean.transpose();
        (mean.as_slice().to_vec(), cov)
    }
}

/// Stationary ‖X − Y‖² of one cross-target coupling.
#[derive(Debug, Clone)]
pub struct BiasResult {
    pub coupling: CouplingKind,
    /// Time-and-replicate mean of ‖X − Y‖² after discarding the transient.
    pub distance_sq: Band,
    /// Per replicate, ‖X − Y‖² every few iterations.
    pub traces: Vec<Vec<f64>>,
}

impl BiasResult {
    /// Upper bound on W₂ between the two targets.
    pub fn w2_bound(&self) -> f64 {
        self.distance_sq.estimate.sqrt()
    }
}

#[derive(Debug, Clone)]
pub struct BiasStudy {
    pub results: Vec<BiasResult>,
    /// Gelbrich lower bound on W₂² from MCMC moments of X and the Laplace
    /// moments.
    pub gelbrich: f64,
}

/// X targets the posterior, Y its Laplace approximation. Each replicate
/// warms X up from the Laplace mode for `warmup` iterations, draws Y
/// exactly and runs the coupled pair for `steps` iterations.
pub fn bias_study(
    setup: &SvmSetup,
    couplings: &[CouplingKind],
    replicates: usize,
    warmup: u64,
    steps: u64,
    seed: u64,
) -> Result<BiasStudy> {
    require_kinds(couplings, CouplingKind::is_increment, "cross-target runs need crn, reflection or a gcrn variant")?;
    let d = setup.data.y.len();
    let mode = setup.laplace.mean()?;
    let discard = ((steps as f64 * BIAS_DISCARD) as u64 / BIAS_THIN) as usize;
    let jobs: Vec<(usize, usize)> = (0..couplings.len()).flat_map(|c| (0..replicates).map(move |r| (c, r))).collect();
    let outputs: Vec<(usize, Vec<f64>, Moments)> = jobs
        .into_par_iter()
        .map(|(c, r)| {
            let kind = couplings[c];
            let mut rng = RngStream::new(sub_seed(seed, "bias-start", r as u64), 0);
            let mut chain = RwmChain::new(&setup.target, setup.h, mode.clone())?;
            for _ in 0..warmup {
                chain.step(&mut rng);
            }
            let y = setup.laplace.sample(&mut rng)?;
            let state = CoupledChainState::new(chain.state().to_vec(), y)?;
            let mut pair = CoupledRwm::cross_target(&setup.target, &setup.laplace, kind, setup.h, state)?;
            let mut rng = RngStream::new(sub_seed(seed, kind.name(), r as u64), 1);
            let mut trace = Vec::with_capacity((steps / BIAS_THIN) as usize + 1);
            let mut moments = Moments::new(d);
            for s in 0..steps {
                pair.step(&mut rng)?;
                if (s + 1) % BIAS_THIN == 0 {
                    trace.push(pair.state().distance_sq());
                    if trace.len() > discard {
                        moments.add(pair.state().x());
                    }
                }
            }
            Ok((c, trace, moments))
        })
        .collect::<Result<_>>()?;

    let mut all = Moments::new(d);
    let mut results = Vec::new();
    for (c, &kind) in couplings.iter().enumerate() {
        let mut traces = Vec::new();
        for (cc, tr, m) in &outputs {
            if *cc == c {
                traces.push(tr.clone());
                all = all.merge(m.clone());
            }
        }
        let distance_sq = stationary_bias_bound(&traces, discard)?;
        results.push(BiasResult { coupling: kind, distance_sq, traces });
    }
    let (mu, cov) = all.mean_cov();
    let gelbrich = gelbrich_bound(&mu, &cov, &setup.laplace.mean()?, &setup.laplace.covariance()?)?;
    Ok(BiasStudy { results, gelbrich })
}

#[derive(Serialize)]
struct BiasRow<'a> {
    coupling: &'a str,
    distance_sq: f64,
    ci_low: f64,
    ci_high: f64,
    w2_bound: f64,
    gelbrich_w2: f64,
}

/// Cross-target bias study with the configured couplings and run lengths.
pub fn bias(cfg: &ExperimentConfig) -> Result<(SvmSetup, BiasStudy)> {
    let couplings = cfg.coupling_kinds(&["gcrn", "crn", "reflection"])?;
    let seed = cfg.seed()?;
    let setup = svm_setup(svm_t(cfg), seed, cfg.h)?;
    let warmup = cfg.burn_in.unwrap_or(cfg.scale.pick(100_000, 20_000));
    let steps = cfg.max_iter.unwrap_or(cfg.scale.pick(1_000_000, 40_000));
    if steps < 4 * BIAS_THIN {
        return Err(CliError::validation("max_iter", format!("bias runs need at least {} iterations", 4 * BIAS_THIN)));
    }
    let study = bias_study(&setup, &couplings, replicates(cfg), warmup, steps, seed)?;
    Ok((setup, study))
}

pub fn run_bias(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let (setup, study) = bias(cfg)?;
    let mut art = Artifacts::default();
    emit_data(&mut art, &setup)?;
    let mut rows = Vec::new();
    let mut traces = Vec::new();
    for r in &study.results {
        let name = r.coupling.name();
        rows.push(BiasRow {
            coupling: name,
            distance_sq: r.distance_sq.estimate,
            ci_low: r.distance_sq.ci_low,
            ci_high: r.distance_sq.ci_high,
            w2_bound: r.w2_bound(),
            gelbrich_w2: study.gelbrich.sqrt(),
        });
        for (rep, tr) in r.traces.iter().enumerate() {
            traces.extend(tr.iter().enumerate().map(|(i, &v)| DistanceRow {
                coupling: name,
                replicate: rep,
                s: (i as u64 + 1) * BIAS_THIN,
                distance_sq: v,
            }));
        }
    }
    art.csv("bias_bounds.csv", &rows)?;
    art.csv("bias_traces.csv", &traces)?;
    let smallest = study
        .results
        .iter()
        .min_by(|a, b| a.distance_sq.estimate.total_cmp(&b.distance_sq.estimate))
        .map(|r| r.coupling.name());
    let summary = to_summary(&serde_json::json!({
        "h": setup.h,
        "gelbrich_w2sq": study.gelbrich,
        "smallest_bound": smallest,
        "bounds": rows.iter().map(|r| (r.coupling, r.distance_sq)).collect::<std::collections::BTreeMap<_, _>>(),
    }))?;
    Ok(RunOutput { artifacts: art, summary, oracle_failures: 0 })
}

pub fn default_deltas() -> Vec<f64> {
    vec![1e-3, 1e-2, 1e-1, 1.0, 10.0]
}

/// Replicate meeting times for each threshold of a coupling family.
pub(crate) fn sweep_rows(results: &[(f64, ConvergenceResult)]) -> Vec<SweepSummary> {
    results
        .iter()
        .map(|(delta, r)| {
            let taus: Vec<f64> = r.run.records.iter().filter(|m| !m.capped).map(|m| m.tau as f64).collect();
            let (mean, se) = mean_se(&taus);
            SweepSummary { delta: *delta, replicates: r.run.records.len(), capped: r.run.n_capped(), mean_tau: mean, se_tau: se }
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub(crate) struct SweepSummary {
    pub delta: f64,
    pub replicates: usize,
    pub capped: usize,
    pub mean_tau: f64,
    pub se_tau: f64,
}

pub(crate) fn sweep_budget(cfg: &ExperimentConfig) -> (u64, u64) {
    let lag = cfg.lag.unwrap_or(1);
    (lag, cfg.max_iter.unwrap_or(lag + cfg.scale.pick(10_000_000, 200_000)))
}

pub fn run_threshold_sweep(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let seed = cfg.seed()?;
    let setup = svm_setup(svm_t(cfg), seed, cfg.h)?;
    let deltas = cfg.deltas.clone().unwrap_or_else(default_deltas);
    let (lag, max_iter) = sweep_budget(cfg);
    let mut results = Vec::new();
    for (i, &delta) in deltas.iter().enumerate() {
        let base = ReplicateConfig {
            lag,
            replicates: replicates(cfg),
            max_iter,
            seed: sub_seed(seed, "svm-threshold", i as u64),
            trace_thin: None,
        };
        let kind = CouplingKind::two_scale(delta)?;
        let mut r = lagged_convergence(&setup.target, setup.h, &[kind], prior(&setup.target), base)?;
        results.push((delta, r.remove(0)));
    }
    let mut art = Artifacts::default();
    emit_data(&mut art, &setup)?;
    let rows = sweep_rows(&results);
    let all: Vec<ConvergenceResult> = results.into_iter().map(|(_, r)| r).collect();
    emit_convergence(&mut art, &all)?;
    art.csv("threshold_sweep.csv", &rows)?;
    let summary = to_summary(&serde_json::json!({ "h": setup.h, "lag": lag, "max_iter": max_iter, "sweep": rows }))?;
    Ok(RunOutput { artifacts: art, summary, oracle_failures: 0 })
}
