use serde::Serialize;

use super::{replicate_band, Band};
use crate::error::{Error, Result};
use crate::kernels::RwmChain;
use crate::rng::RngStream;
use crate::targets::LogDensity;

/// Per-iteration record of one marginal chain.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ChainTrace {
    pub dim: usize,
    pub accepted: Vec<bool>,
    /// ‖X_{t+1} − X_t‖².
    pub sq_jumps: Vec<f64>,
    /// ‖X_{t+1}‖².
    pub sq_norms: Vec<f64>,
}

impl ChainTrace {
    /// Runs `chain` for `steps` iterations and records each one.
    pub fn record<T: LogDensity + ?Sized>(chain: &mut RwmChain<'_, T>, steps: usize, rng: &mut RngStream) -> Self {
        let mut tr = Self { dim: chain.state().len(), ..Self::default() };
        for _ in 0..steps {
            let before = chain.accepted;
            let jump = chain.step(rng);
            tr.accepted.push(chain.accepted > before);
            tr.sq_jumps.push(jump);
            tr.sq_norms.push(chain.state().iter().map(|v| v * v).sum());
        }
        tr
    }

    pub fn len(&self) -> usize {
        self.accepted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.accepted.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SummaryStats {
    pub acceptance: Band,
    /// Mean ‖X_{t+1} − X_t‖², i.e. d times the per-coordinate squared jump.
    pub esjd: Band,
    /// Mean ‖X_t‖²/d.
    pub scaled_sq_norm: Band,
}

/// Acceptance rate, ESJD and scaled squared norm with 95% bands across
/// replicate traces.
pub fn summary_stats(traces: &[ChainTrace]) -> Result<SummaryStats> {
    if traces.is_empty() || traces.iter().any(ChainTrace::is_empty) {
        return Err(Error::Insufficient("empty chain trace".into()));
    }
    let acc: Vec<Vec<f64>> = traces.iter().map(|t| t.accepted.iter().map(|&a| f64::from(u8::from(a))).collect()).collect();
    let norms: Vec<Vec<f64>> =
        traces.iter().map(|t| t.sq_norms.iter().map(|v| v / t.dim as f64).collect()).collect();
    let jumps: Vec<&[f64]> = traces.iter().map(|t| t.sq_jumps.as_slice()).collect();
    Ok(SummaryStats {
        acceptance: replicate_band(&slices(&acc)),
        esjd: replicate_band(&jumps),
        scaled_sq_norm: replicate_band(&slices(&norms)),
    })
}

fn slices(v: &[Vec<f64>]) -> Vec<&[f64]> {
    v.iter().map(Vec::as_slice).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::std_normal_cdf;
    use crate::targets::TargetModel;

    fn stationary_traces(d: usize, l: f64, steps: usize, replicates: usize, seed: u64) -> Vec<ChainTrace> {
        let target = TargetModel::spherical(d).unwrap();
        (0..replicates)
            .map(|r| {
                let mut rng = RngStream::new(seed, r as u64);
                let x0 = target.sample(&mut rng).unwrap();
                let mut chain = RwmChain::new(&target, l / (d as f64).sqrt(), x0).unwrap();
                ChainTrace::record(&mut chain, steps, &mut rng)
            })
            .collect()
    }

    #[test]
    fn all_rejected_trace() {
        let tr = ChainTrace { dim: 3, accepted: vec![false; 4], sq_jumps: vec![0.0; 4], sq_norms: vec![3.0; 4] };
        let s = summary_stats(&[tr]).unwrap();
        assert_eq!(s.acceptance.estimate, 0.0);
        assert_eq!(s.esjd.estimate, 0.0);
        assert_eq!(s.scaled_sq_norm.estimate, 1.0);
        assert!(summary_stats(&[]).is_err());
        assert!(summary_stats(&[ChainTrace::default()]).is_err());
    }

    #[test]
    fn recorded_trace_is_consistent() {
        let tr = &stationary_traces(20, 2.38, 500, 1, 1)[0];
        assert_eq!(tr.len(), 500);
        for (a, j) in tr.accepted.iter().zip(&tr.sq_jumps) {
            assert_eq!(*a, *j > 0.0);
        }
    }

    #[test]
    fn optimal_scaling_at_d_1000() {
        let l = 2.38;
        let s = summary_stats(&stationary_traces(1000, l, 25_000, 4, 2)).unwrap();
        assert!((s.acceptance.estimate - 0.234).abs() < 0.01, "{:?}", s.acceptance);
        let limit = 2.0 * l * l * std_normal_cdf(-0.5 * l);
        let se = s.esjd.half_width() / super::super::Z95;
        assert!((s.esjd.estimate - limit).abs() < 3.0 * se, "{:?} vs {limit}", s.esjd);
        assert!((s.scaled_sq_norm.estimate - 1.0).abs() < 0.01);
    }

    #[test]
    fn esjd_peaks_near_optimal_scale() {
        let grid = [1.0, 1.7, 2.38, 3.0, 4.0];
        let esjd: Vec<f64> =
            grid.iter().map(|&l| summary_stats(&stationary_traces(200, l, 20_000, 2, 3)).unwrap().esjd.estimate).collect();
        let best = esjd.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(grid[best], 2.38, "{esjd:?}");
    }
}
