//! Closed forms checked against independent Monte Carlo estimates and
//! hand-computable values.

use mcmccoup_core::diagnostics::gelbrich_bound;
use mcmccoup_core::fixed_points::{fixed_point_residual, h_rho, solve_fixed_point};
use mcmccoup_core::ode::{g_value, OdeKind};
use mcmccoup_core::special::gaussian_integrals;
use mcmccoup_core::RngStream;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use super::{sub_seed, to_summary, RunOutput};
use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::output::Artifacts;

/// Monte Carlo agreement is required within this many standard errors.
pub const MC_SIGMAS: f64 = 3.0;
const DEFAULT_POINTS: usize = 20;

/// One comparison between a computed value and its oracle.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub params: String,
    pub value: f64,
    pub oracle: f64,
    /// Standard error of a Monte Carlo oracle; zero for exact oracles.
    pub se: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    fn mc(name: &'static str, params: String, value: f64, (oracle, se): (f64, f64)) -> Self {
        let tolerance = MC_SIGMAS * se + 1e-12;
        Self { name, params, value, oracle, se, tolerance, pass: (value - oracle).abs() <= tolerance }
    }

    fn exact(name: &'static str, params: String, value: f64, oracle: f64, tolerance: f64) -> Self {
        Self { name, params, value, oracle, se: 0.0, tolerance, pass: (value - oracle).abs() <= tolerance }
    }
}

/// Mean and standard error of `f` over `n` draws.
fn monte_carlo(n: u64, rng: &mut RngStream, mut f: impl FnMut(&mut RngStream) -> f64) -> (f64, f64) {
    let (mut sum, mut sq) = (0.0, 0.0);
    for _ in 0..n {
        let v = f(rng);
        sum += v;
        sq += v * v;
    }
    let nf = n as f64;
    let mean = sum / nf;
    (mean, ((sq / nf - mean * mean).max(0.0) / (nf - 1.0)).sqrt())
}

fn accept(c: f64, l: f64) -> f64 {
    (-c - 0.5 * l * l).exp().min(1.0)
}

/// A random parameter point.
#[derive(Debug, Clone, Copy)]
struct Point {
    alpha: f64,
    beta: f64,
    rho: f64,
    l: f64,
}

fn draw_points(n: usize, seed: u64) -> Vec<Point> {
    let mut rng = RngStream::new(sub_seed(seed, "validate-points", 0), 0);
    (0..n)
        .map(|_| Point {
            alpha: 0.3 + 1.5 * rng.uniform(),
            beta: 0.3 + 1.5 * rng.uniform(),
            rho: -0.95 + 1.9 * rng.uniform(),
            l: 0.5 + 3.5 * rng.uniform(),
        })
        .collect()
}

/// Monte Carlo checks of `gaussian_integrals`, `g_value` and `h_rho` at
/// `points` random parameter points with `samples` draws each.
pub fn monte_carlo_checks(points: usize, samples: u64, seed: u64) -> Result<Vec<Check>> {
    let pts = draw_points(points, seed);
    let per_point: Vec<Vec<Check>> = pts
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let mut rng = RngStream::new(sub_seed(seed, "validate-mc", i as u64), 0);
            let Point { alpha, beta, rho, l } = *p;
            let gi = gaussian_integrals(alpha, beta, l)?;
            let tag = format!("alpha={alpha:.4},beta={beta:.4},l={l:.4}");
            let first = monte_carlo(samples, &mut rng, |r| {
                let z = r.normal();
                z * accept(l * alpha * z, l)
            });
            let second = monte_carlo(samples, &mut rng, |r| {
                let z = r.normal();
                accept(l * alpha * z, l).min(accept(l * beta * z, l))
            });
            let (x, y) = (alpha * alpha, beta * beta);
            let c = (1.0 - rho * rho).sqrt();
            let g = monte_carlo(samples, &mut rng, |r| {
                let z1 = r.normal();
                let z2 = rho * z1 + c * r.normal();
                accept(l * alpha * z1, l).min(accept(l * beta * z2, l))
            });
            let h = monte_carlo(samples, &mut rng, |r| {
                let z1 = r.normal();
                let z2 = rho * z1 + c * r.normal();
                accept(l * z1.max(z2), l)
            });
            let with_rho = format!("x={x:.4},y={y:.4},rho={rho:.4},l={l:.4}");
            Ok(vec![
                Check::mc("gaussian_integrals.first", tag.clone(), gi.first, first),
                Check::mc("gaussian_integrals.second", tag, gi.second, second),
                Check::mc("g_value", with_rho, g_value(x, y, rho, l)?, g),
                Check::mc("h_rho", format!("rho={rho:.4},l={l:.4}"), h_rho(rho, l)?, h),
            ])
        })
        .collect::<Result<_>>()?;
    Ok(per_point.into_iter().flatten().collect())
}

/// Deterministic checks with hand-computable or structural answers.
pub fn exact_checks() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let s1 = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 9.0]));
    let s2 = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![4.0, 1.0]));
    // (1 − 2)² + (3 − 1)² = 5.
    let w = gelbrich_bound(&[0.0, 0.0], &s1, &[0.0, 0.0], &s2)?;
    out.push(Check::exact("gelbrich.commuting", "diag(1,9) vs diag(4,1)".into(), w, 5.0, 1e-10));
    let w = gelbrich_bound(&[1.0, 0.0], &s1, &[0.0, 0.0], &s2)?;
    out.push(Check::exact("gelbrich.commuting_shift", "mean shift 1".into(), w, 6.0, 1e-10));
    for l in [1.0, 2.38, 4.0] {
        out.push(Check::exact("h_rho.unit_correlation", format!("l={l}"), h_rho(1.0, l)?, gaussian_integrals(1.0, 1.0, l)?.second, 1e-12));
        for (kind, eps) in [(OdeKind::Crn, 1.0), (OdeKind::Crn, 3.0), (OdeKind::Reflection, 3.0)] {
            let fp = solve_fixed_point(kind, l, eps)?;
            let r = fixed_point_residual(kind, fp.v_star, l, eps)?;
            out.push(Check::exact("fixed_point.residual", format!("{kind},l={l},eps={eps}"), r, 0.0, 1e-9));
        }
        let fp = solve_fixed_point(OdeKind::Gcrn, l, 2.0)?;
        out.push(Check::exact("fixed_point.gcrn_meets", format!("l={l}"), fp.s_inf, 0.0, 0.0));
    }
    Ok(out)
}

pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let seed = cfg.seed()?;
    let samples = cfg.samples.unwrap_or(cfg.scale.pick(10_000_000, 1_000_000));
    let mut checks = exact_checks()?;
    checks.extend(monte_carlo_checks(DEFAULT_POINTS, samples, seed)?);
    let failed = checks.iter().filter(|c| !c.pass).count();
    let mut art = Artifacts::default();
    art.csv("checks.csv", &checks)?;
    let summary = to_summary(&serde_json::json!({ "checks": checks.len(), "failed": failed, "samples": samples }))?;
    Ok(RunOutput { artifacts: art, summary, oracle_failures: failed })
}
