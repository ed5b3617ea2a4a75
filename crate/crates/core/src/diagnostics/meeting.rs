use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use super::{mean_se, Z95};
use crate::couplings::{CoupledChainState, CoupledHugHop, CoupledRwm, CouplingKind};
use crate::error::{Error, Result};
use crate::kernels::{hop_step, hug_step, HopParams, HugParams, RwmChain};
use crate::ode::csv_err;
use crate::rng::RngStream;
use crate::targets::LogDensity;

/// Two chains advanced jointly by a coupled kernel.
pub trait CoupledChains {
    fn step(&mut self, rng: &mut RngStream) -> Result<()>;
    fn met(&self) -> bool;
    fn distance_sq(&self) -> f64;
}

impl<TX: LogDensity + ?Sized, TY: LogDensity + ?Sized> CoupledChains for CoupledRwm<'_, TX, TY> {
    fn step(&mut self, rng: &mut RngStream) -> Result<()> {
        CoupledRwm::step(self, rng).map(|_| ())
    }

    fn met(&self) -> bool {
        self.state().met()
    }

    fn distance_sq(&self) -> f64 {
        self.state().distance_sq()
    }
}

impl<T: LogDensity + ?Sized> CoupledChains for CoupledHugHop<'_, T> {
    fn step(&mut self, rng: &mut RngStream) -> Result<()> {
        CoupledHugHop::step(self, rng).map(|_| ())
    }

    fn met(&self) -> bool {
        self.state().met()
    }

    fn distance_sq(&self) -> f64 {
        self.state().distance_sq()
    }
}

/// A recipe for lag-L coupled chains.
pub trait LaggedCoupling: Sync {
    type Chains<'s>: CoupledChains
    where
        Self: 's;

    /// Draws (X₀, Y₀), advances X alone by `lag` steps and returns the pair
    /// (X_lag, Y₀) ready for joint stepping.
    fn start(&self, lag: u64, rng: &mut RngStream) -> Result<Self::Chains<'_>>;
}

/// Lagged coupled RWM on one target with an arbitrary initial law.
pub struct RwmLagged<'a, T: LogDensity + ?Sized, F> {
    pub target: &'a T,
    pub kind: CouplingKind,
    pub h: f64,
    pub init: F,
}

impl<'a, T, F> LaggedCoupling for RwmLagged<'a, T, F>
where
    T: LogDensity + ?Sized,
    F: Fn(&mut RngStream) -> Result<(Vec<f64>, Vec<f64>)> + Sync,
{
    type Chains<'s>
        = CoupledRwm<'s, T>
    where
        Self: 's;

    fn start(&self, lag: u64, rng: &mut RngStream) -> Result<CoupledRwm<'_, T>> {
        let (x0, y0) = (self.init)(rng)?;
        let mut chain = RwmChain::new(self.target, self.h, x0)?;
        for _ in 0..lag {
            chain.step(rng);
        }
        let state = CoupledChainState::new(chain.state().to_vec(), y0)?;
        CoupledRwm::new(self.target, self.kind, self.h, state)
    }
}

/// Lagged coupled Hug and Hop on one target with an arbitrary initial law.
pub struct HugHopLagged<'a, T: LogDensity + ?Sized, F> {
    pub target: &'a T,
    pub hug: HugParams,
    pub hop: HopParams,
    /// Hop threshold on ‖X − Y‖².
    pub delta: f64,
    pub init: F,
}

impl<'a, T, F> LaggedCoupling for HugHopLagged<'a, T, F>
where
    T: LogDensity + ?Sized,
    F: Fn(&mut RngStream) -> Result<(Vec<f64>, Vec<f64>)> + Sync,
{
    type Chains<'s>
        = CoupledHugHop<'s, T>
    where
        Self: 's;

    fn start(&self, lag: u64, rng: &mut RngStream) -> Result<CoupledHugHop<'_, T>> {
        let (mut x, y0) = (self.init)(rng)?;
        let mut v = vec![0.0; x.len()];
        for _ in 0..lag {
            rng.fill_normals(&mut v);
            let u = rng.uniform();
            x = hug_step(&x, &v, &self.hug, u, self.target)?.x_next;
            rng.fill_normals(&mut v);
            let z1 = rng.normal();
            let u = rng.uniform();
            x = hop_step(&x, &v, z1, u, &self.hop, self.target)?.x_next;
        }
        let state = CoupledChainState::new(x, y0)?;
        CoupledHugHop::new(self.target, self.hug, self.hop, self.delta, state)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReplicateConfig {
    pub lag: u64,
    pub replicates: usize,
    /// Budget on the index of X; replicates that have not met by then are
    /// capped.
    pub max_iter: u64,
    pub seed: u64,
    /// Store ‖X_{s+L} − Y_s‖² every `thin` joint steps when set.
    pub trace_thin: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MeetingRecord {
    pub replicate: usize,
    /// First t with X_t = Y_{t−L}; equals the budget when capped.
    pub tau: u64,
    pub lag: u64,
    pub capped: bool,
}

/// ‖X_{s+L} − Y_s‖² at s = 0, thin, 2·thin, … up to the meeting.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceTrace {
    pub thin: u64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateRun {
    pub records: Vec<MeetingRecord>,
    /// One entry per replicate when traces were requested.
    pub traces: Vec<DistanceTrace>,
}

impl ReplicateRun {
    pub fn n_capped(&self) -> usize {
        self.records.iter().filter(|r| r.capped).count()
    }
}

/// Runs `cfg.replicates` independent lag-L coupled pairs, replicate `r` on
/// stream `r` of `cfg.seed`.
pub fn run_replicates<C: LaggedCoupling>(coupling: &C, cfg: &ReplicateConfig) -> Result<ReplicateRun> {
    if cfg.lag == 0 || cfg.replicates == 0 {
        return Err(Error::domain("lag and replicate count must be positive"));
    }
    if cfg.trace_thin == Some(0) {
        return Err(Error::domain("trace thinning must be positive"));
    }
    let out: Vec<(MeetingRecord, Option<DistanceTrace>)> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| run_one(coupling, cfg, r))
        .collect::<Result<_>>()?;
    let mut records = Vec::with_capacity(out.len());
    let mut traces = Vec::new();
    for (rec, trace) in out {
        records.push(rec);
        traces.extend(trace);
    }
    Ok(ReplicateRun { records, traces })
}

fn run_one<C: LaggedCoupling>(
    coupling: &C,
    cfg: &ReplicateConfig,
    replicate: usize,
) -> Result<(MeetingRecord, Option<DistanceTrace>)> {
    let mut rng = RngStream::new(cfg.seed, replicate as u64);
    let mut chains = coupling.start(cfg.lag, &mut rng)?;
    let mut trace = cfg.trace_thin.map(|thin| DistanceTrace { thin, values: Vec::new() });
    let mut s = 0u64;
    let (tau, capped) = loop {
        if let Some(tr) = trace.as_mut() {
            if s % tr.thin == 0 {
                tr.values.push(chains.distance_sq());
            }
        }
        if chains.met() {
            break (cfg.lag + s, false);
        }
        if cfg.lag + s >= cfg.max_iter {
            break (cfg.max_iter, true);
        }
        chains.step(&mut rng)?;
        s += 1;
    };
    Ok((MeetingRecord { replicate, tau, lag: cfg.lag, capped }, trace))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundMetric {
    Tv,
    W2sq,
}

impl BoundMetric {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Tv => "tv",
            Self::W2sq => "w2sq",
        }
    }
}

/// Upper bound estimates on a distance to stationarity at iterations `t`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCurve {
    pub metric: BoundMetric,
    pub t: Vec<u64>,
    pub estimate: Vec<f64>,
    pub ci_low: Vec<f64>,
    pub ci_high: Vec<f64>,
    pub n_replicates: usize,
    pub n_capped: usize,
}

impl BoundCurve {
    /// First grid time at which the estimate is at most `level`.
    pub fn first_below(&self, level: f64) -> Option<u64> {
        self.t.iter().zip(&self.estimate).find(|(_, e)| **e <= level).map(|(t, _)| *t)
    }
}

fn common_lag(records: &[MeetingRecord]) -> Result<u64> {
    let lag = records.first().ok_or_else(|| Error::Insufficient("no meeting records".into()))?.lag;
    if records.iter().any(|r| r.lag != lag) {
        return Err(Error::domain("meeting records mix different lags"));
    }
    Ok(lag)
}

/// Total variation bound: mean over met replicates of
/// max(0, ⌈(τ − L − t)/L⌉).
pub fn tv_bound_curve(records: &[MeetingRecord], t_grid: &[u64]) -> Result<BoundCurve> {
    let lag = common_lag(records)?;
    let met: Vec<u64> = records.iter().filter(|r| !r.capped).map(|r| r.tau).collect();
    if met.is_empty() {
        return Err(Error::Insufficient("every replicate was capped".into()));
    }
    let mut curve = empty_curve(BoundMetric::Tv, met.len(), records.len() - met.len());
    let mut terms = vec![0.0; met.len()];
    for &t in t_grid {
        for (term, &tau) in terms.iter_mut().zip(&met) {
            let excess = tau.saturating_sub(lag + t);
            *term = excess.div_ceil(lag) as f64;
        }
        let (mean, se) = mean_se(&terms);
        curve.push(t, mean, (mean - Z95 * se).max(0.0), mean + Z95 * se);
    }
    Ok(curve)
}

/// Squared Wasserstein bound
/// (Σ_{j≥1} √(mean_r ‖X_{t+jL} − Y_{t+(j−1)L}‖²))² over met replicates.
/// The interval propagates a normal interval of each mean term.
pub fn w2_bound_curve(run: &ReplicateRun, t_grid: &[u64]) -> Result<BoundCurve> {
    let lag = common_lag(&run.records)?;
    if run.traces.len() != run.records.len() {
        return Err(Error::Insufficient("distance traces were not recorded".into()));
    }
    let traces: Vec<&DistanceTrace> =
        run.records.iter().zip(&run.traces).filter(|(r, _)| !r.capped).map(|(_, tr)| tr).collect();
    if traces.is_empty() {
        return Err(Error::Insufficient("every replicate was capped".into()));
    }
    let thin = traces[0].thin;
    if lag % thin != 0 || t_grid.iter().any(|t| t % thin != 0) {
        return Err(Error::Insufficient(format!("trace thinning {thin} does not divide the lag and every t")));
    }
    let horizon = traces.iter().map(|tr| tr.values.len() as u64 * thin).max().unwrap_or(0);
    let mut curve = empty_curve(BoundMetric::W2sq, traces.len(), run.records.len() - traces.len());
    let mut d = vec![0.0; traces.len()];
    for &t in t_grid {
        let (mut est, mut lo, mut hi) = (0.0, 0.0, 0.0);
        let mut s = t;
        while s < horizon {
            let idx = (s / thin) as usize;
            for (v, tr) in d.iter_mut().zip(&traces) {
                *v = tr.values.get(idx).copied().unwrap_or(0.0);
            }
            let (m, se) = mean_se(&d);
            est += m.sqrt();
            lo += (m - Z95 * se).max(0.0).sqrt();
            hi += (m + Z95 * se).sqrt();
            s += lag;
        }
        curve.push(t, est * est, lo * lo, hi * hi);
    }
    Ok(curve)
}

fn empty_curve(metric: BoundMetric, n_replicates: usize, n_capped: usize) -> BoundCurve {
    BoundCurve {
        metric,
        t: Vec::new(),
        estimate: Vec::new(),
        ci_low: Vec::new(),
        ci_high: Vec::new(),
        n_replicates,
        n_capped,
    }
}

impl BoundCurve {
    fn push(&mut self, t: u64, est: f64, lo: f64, hi: f64) {
        self.t.push(t);
        self.estimate.push(est);
        self.ci_low.push(lo);
        self.ci_high.push(hi);
    }
}

/// Writes `metric,t,estimate,ci_low,ci_high,n_replicates,n_capped`.
pub fn write_bound_curves_csv<W: Write>(curves: &[BoundCurve], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["metric", "t", "estimate", "ci_low", "ci_high", "n_replicates", "n_capped"]).map_err(csv_err)?;
    for c in curves {
        for i in 0..c.t.len() {
            w.serialize((c.metric.name(), c.t[i], c.estimate[i], c.ci_low[i], c.ci_high[i], c.n_replicates, c.n_capped))
                .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}
