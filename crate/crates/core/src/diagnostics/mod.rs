//! Estimators built from coupled chains: meeting times, convergence bound
//! curves, stationary bias bounds and marginal chain summaries.

mod bias;
mod meeting;
mod summary;

pub use bias::{gelbrich_bound, spd_sqrt, stationary_bias_bound, symmetric_eigen, SymmetricEigen};
pub use meeting::{
    run_replicates, tv_bound_curve, w2_bound_curve, write_bound_curves_csv, BoundCurve, BoundMetric, CoupledChains,
    DistanceTrace, HugHopLagged, LaggedCoupling, MeetingRecord, ReplicateConfig, ReplicateRun, RwmLagged,
};
pub use summary::{summary_stats, ChainTrace, SummaryStats};

use serde::Serialize;

/// Normal quantile for two-sided 95% intervals.
pub const Z95: f64 = 1.959_963_984_540_054;

/// A point estimate with a 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Band {
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl Band {
    fn exact(v: f64) -> Self {
        Self { estimate: v, ci_low: v, ci_high: v }
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.ci_high - self.ci_low)
    }

    pub fn contains(&self, v: f64) -> bool {
        self.ci_low <= v && v <= self.ci_high
    }
}

/// Sample mean and its standard error.
pub(crate) fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// CLT band across replicate means.
fn clt_band(values: &[f64]) -> Band {
    let (mean, se) = mean_se(values);
    Band { estimate: mean, ci_low: mean - Z95 * se, ci_high: mean + Z95 * se }
}

/// Band for a quantity averaged over time within replicates. Replicate
/// means drive the interval when there are several replicates; a single
/// replicate falls back to 20 batch means.
fn replicate_band(series: &[&[f64]]) -> Band {
    if series.len() >= 2 {
        let means: Vec<f64> = series.iter().map(|s| s.iter().sum::<f64>() / s.len() as f64).collect();
        return clt_band(&means);
    }
    let s = series[0];
    let batches = 20.min(s.len());
    if batches < 2 {
        return Band::exact(s.iter().sum::<f64>() / s.len() as f64);
    }
    let size = s.len() / batches;
    let means: Vec<f64> = s.chunks_exact(size).take(batches).map(|c| c.iter().sum::<f64>() / size as f64).collect();
    let estimate = s.iter().sum::<f64>() / s.len() as f64;
    let (_, se) = mean_se(&means);
    Band { estimate, ci_low: estimate - Z95 * se, ci_high: estimate + Z95 * se }
}
