//! Spherical Gaussian targets: limiting ODE curves and their comparison with
//! simulated coupled chains.

use std::f64::consts::SQRT_2;

use mcmccoup_core::couplings::{CoupledChainState, CoupledRwm, CouplingKind};
use mcmccoup_core::ode::{integrate_w, OdeKind, OdeState, Trajectory, DEFAULT_DT};
use mcmccoup_core::targets::TargetModel;
use mcmccoup_core::RngStream;
use rayon::prelude::*;
use serde::Serialize;

use super::{ode_kind, require_kinds, sub_seed, to_summary, RunOutput};
use crate::config::{ExperimentConfig, Start};
use crate::error::Result;
use crate::output::Artifacts;

pub const DEFAULT_LS: [f64; 2] = [2.38, SQRT_2];
const DEFAULT_T_END: f64 = 5.0;
/// ODE states kept per unit of t in the written curves.
const POINTS_PER_UNIT: usize = 100;

/// One limiting curve.
#[derive(Debug, Clone)]
pub struct OdeCurve {
    pub start: Start,
    pub l: f64,
    pub kind: OdeKind,
    pub trajectory: Trajectory,
}

/// ODE solutions for every start, step parameter and curve kind.
pub fn ode_curves(starts: &[Start], ls: &[f64], kinds: &[OdeKind], t_end: f64) -> Result<Vec<OdeCurve>> {
    let jobs: Vec<(Start, f64, OdeKind)> = starts
        .iter()
        .flat_map(|&s| ls.iter().flat_map(move |&l| kinds.iter().map(move |&k| (s, l, k))))
        .collect();
    jobs.into_par_iter()
        .map(|(start, l, kind)| {
            let w0 = OdeState::from_correlation(start.x0, start.y0, start.rho0)?;
            let trajectory = integrate_w(w0, l, kind, t_end, DEFAULT_DT)?;
            Ok(OdeCurve { start, l, kind, trajectory })
        })
        .collect()
}

fn thinned(tr: &Trajectory) -> Trajectory {
    let every = ((1.0 / DEFAULT_DT) as usize / POINTS_PER_UNIT).max(1);
    let keep = |i: &usize| i % every == 0 || *i + 1 == tr.t.len();
    Trajectory {
        t: (0..tr.t.len()).filter(keep).map(|i| tr.t[i]).collect(),
        states: (0..tr.t.len()).filter(keep).map(|i| tr.states[i]).collect(),
    }
}

fn curve_name(prefix: &str, start_idx: usize, l: f64, kind: &str) -> String {
    format!("{prefix}_start{start_idx}_l{l:.4}_{kind}.csv")
}

#[derive(Serialize)]
struct OdeEndpoint {
    start: usize,
    x0: f64,
    y0: f64,
    rho0: f64,
    l: f64,
    kind: &'static str,
    t_end: f64,
    s_end: f64,
}

pub fn run_ode(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let starts = cfg.starts_or_standard();
    let ls = cfg.l.clone().unwrap_or_else(|| DEFAULT_LS.to_vec());
    let t_end = cfg.t_end.unwrap_or(DEFAULT_T_END);
    let curves = ode_curves(&starts, &ls, &OdeKind::ALL, t_end)?;
    let mut art = Artifacts::default();
    let mut ends = Vec::new();
    for c in &curves {
        let idx = starts.iter().position(|s| *s == c.start).unwrap_or(0);
        art.with_writer(&curve_name("ode", idx, c.l, c.kind.name()), |w| thinned(&c.trajectory).write_csv(w))?;
        ends.push(OdeEndpoint {
            start: idx,
            x0: c.start.x0,
            y0: c.start.y0,
            rho0: c.start.rho0,
            l: c.l,
            kind: c.kind.name(),
            t_end,
            s_end: c.trajectory.last().s(),
        });
    }
    art.csv("ode_endpoints.csv", &ends)?;
    let summary = serde_json::json!({ "trajectories": curves.len() });
    Ok(RunOutput { artifacts: art, summary, oracle_failures: 0 })
}

/// Initial pair X = √x₀ Z, Y = √y₀(ρ₀Z + √(1−ρ₀²) Z*).
pub fn correlated_start(start: &Start, d: usize, rng: &mut RngStream) -> (Vec<f64>, Vec<f64>) {
    let mut z = vec![0.0; d];
    let mut zs = vec![0.0; d];
    rng.fill_normals(&mut z);
    rng.fill_normals(&mut zs);
    let c = (1.0 - start.rho0 * start.rho0).max(0.0).sqrt();
    let (sx, sy) = (start.x0.sqrt(), start.y0.sqrt());
    let x = z.iter().map(|a| sx * a).collect();
    let y = z.iter().zip(&zs).map(|(a, b)| sy * (start.rho0 * a + c * b)).collect();
    (x, y)
}

/// A point of a simulated trace with the ODE value at the same time.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TracePoint {
    /// Iteration divided by d.
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub v: f64,
    pub s: f64,
    pub s_ode: f64,
}

#[derive(Debug, Clone)]
pub struct McmcOdeRun {
    pub coupling: CouplingKind,
    pub start: Start,
    pub l: f64,
    pub d: usize,
    pub points: Vec<TracePoint>,
    /// sup_t |s_MCMC(t) − s_ODE(t)| over the recorded times.
    pub sup_gap: f64,
}

/// Simulates coupled chains on N(0, I_d) from each start and compares
/// ‖X−Y‖²/d with the ODE limit over t/d ∈ [0, t_end].
pub fn mcmc_vs_ode(
    d: usize,
    ls: &[f64],
    starts: &[Start],
    couplings: &[CouplingKind],
    t_end: f64,
    seed: u64,
) -> Result<Vec<McmcOdeRun>> {
    let target = TargetModel::spherical(d)?;
    let jobs: Vec<(CouplingKind, Start, f64)> = couplings
        .iter()
        .flat_map(|&k| starts.iter().flat_map(move |&s| ls.iter().map(move |&l| (k, s, l))))
        .collect();
    let steps = (t_end * d as f64).round() as u64;
    let thin = (d as u64 / POINTS_PER_UNIT as u64).max(1);
    let target = &target;
    jobs.into_par_iter()
        .enumerate()
        .map(|(i, (coupling, start, l))| {
            let kind = ode_kind(coupling)?;
            let ode = integrate_w(OdeState::from_correlation(start.x0, start.y0, start.rho0)?, l, kind, t_end, DEFAULT_DT)?;
            let mut rng = RngStream::new(sub_seed(seed, "mcmc-vs-ode", i as u64), 0);
            let (x, y) = correlated_start(&start, d, &mut rng);
            let mut chains = CoupledRwm::new(target, coupling, l / (d as f64).sqrt(), CoupledChainState::new(x, y)?)?;
            let mut points = Vec::with_capacity((steps / thin + 1) as usize);
            let dn = d as f64;
            for step in 0..=steps {
                if step % thin == 0 {
                    let st = chains.state();
                    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>() / dn;
                    let t = step as f64 / dn;
                    let (xn, yn, v) = (dot(st.x(), st.x()), dot(st.y(), st.y()), dot(st.x(), st.y()));
                    points.push(TracePoint { t, x: xn, y: yn, v, s: st.distance_sq() / dn, s_ode: ode.s_at(t.min(t_end)) });
                }
                if step < steps {
                    chains.step(&mut rng)?;
                }
            }
            let sup_gap = points.iter().map(|p| (p.s - p.s_ode).abs()).fold(0.0, f64::max);
            Ok(McmcOdeRun { coupling, start, l, d, points, sup_gap })
        })
        .collect()
}

#[derive(Serialize)]
struct TraceRow<'a> {
    coupling: &'a str,
    start: usize,
    l: f64,
    t: f64,
    x: f64,
    y: f64,
    v: f64,
    s: f64,
    s_ode: f64,
}

#[derive(Serialize)]
struct GapRow<'a> {
    coupling: &'a str,
    start: usize,
    x0: f64,
    y0: f64,
    rho0: f64,
    l: f64,
    d: usize,
    sup_gap: f64,
}

pub fn run_mcmc_vs_ode(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let couplings = cfg.coupling_kinds(&["crn", "reflection", "gcrn"])?;
    require_kinds(&couplings, |k| ode_kind(*k).is_ok(), "use crn, reflection or gcrn")?;
    let starts = cfg.starts_or_standard();
    let ls = cfg.l.clone().unwrap_or_else(|| DEFAULT_LS.to_vec());
    let d = cfg.d.unwrap_or(1000);
    let t_end = cfg.t_end.unwrap_or(DEFAULT_T_END);
    let runs = mcmc_vs_ode(d, &ls, &starts, &couplings, t_end, cfg.seed()?)?;

    let start_idx = |s: &Start| starts.iter().position(|q| q == s).unwrap_or(0);
    let mut traces = Vec::new();
    let mut gaps = Vec::new();
    for r in &runs {
        let name = r.coupling.name();
        traces.extend(r.points.iter().map(|p| TraceRow {
            coupling: name,
            start: start_idx(&r.start),
            l: r.l,
            t: p.t,
            x: p.x,
            y: p.y,
            v: p.v,
            s: p.s,
            s_ode: p.s_ode,
        }));
        gaps.push(GapRow {
            coupling: name,
            start: start_idx(&r.start),
            x0: r.start.x0,
            y0: r.start.y0,
            rho0: r.start.rho0,
            l: r.l,
            d,
            sup_gap: r.sup_gap,
        });
    }
    let mut art = Artifacts::default();
    art.csv("traces.csv", &traces)?;
    art.csv("sup_gaps.csv", &gaps)?;
    let worst = runs.iter().map(|r| r.sup_gap).fold(0.0, f64::max);
    let summary = to_summary(&serde_json::json!({ "d": d, "runs": runs.len(), "max_sup_gap": worst }))?;
    Ok(RunOutput { artifacts: art, summary, oracle_failures: 0 })
}
