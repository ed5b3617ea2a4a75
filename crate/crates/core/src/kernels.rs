//! Single-chain transition kernels: random walk Metropolis, Hug and Hop.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::rng::RngStream;
use crate::targets::LogDensity;

/// Inputs of one RWM transition: proposal x + h·z, accepted iff
/// u ≤ π(x + hz)/π(x).
#[derive(Debug, Clone, Copy)]
pub struct RwmStepInputs<'a> {
    pub x: &'a [f64],
    pub z: &'a [f64],
    pub u: f64,
    pub h: f64,
}

/// Result of a Metropolis-type transition.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub x_next: Vec<f64>,
    pub accepted: bool,
    /// Set when the step was rejected because a gradient vanished.
    pub degenerate: bool,
}

/// The Metropolis decision on the log scale of the ratio.
#[inline]
pub(crate) fn accept(u: f64, log_ratio: f64) -> bool {
    u <= log_ratio.exp()
}

pub fn rwm_step<T: LogDensity + ?Sized>(inputs: &RwmStepInputs<'_>, target: &T) -> Result<StepOutcome> {
    let RwmStepInputs { x, z, u, h } = *inputs;
    check_dim(target.dim(), x.len())?;
    check_dim(x.len(), z.len())?;
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::domain(format!("uniform draw {u} outside [0,1]")));
    }
    let prop: Vec<f64> = x.iter().zip(z).map(|(a, b)| a + h * b).collect();
    let accepted = accept(u, target.log_density(&prop) - target.log_density(x));
    Ok(StepOutcome { x_next: if accepted { prop } else { x.to_vec() }, accepted, degenerate: false })
}

/// An RWM chain that caches log π at the current state.
#[derive(Debug, Clone)]
pub struct RwmChain<'t, T: LogDensity + ?Sized> {
    target: &'t T,
    h: f64,
    x: Vec<f64>,
    log_density: f64,
    prop: Vec<f64>,
    pub steps: u64,
    pub accepted: u64,
}

impl<'t, T: LogDensity + ?Sized> RwmChain<'t, T> {
    pub fn new(target: &'t T, h: f64, x0: Vec<f64>) -> Result<Self> {
        check_dim(target.dim(), x0.len())?;
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::domain(format!("step size must be positive, got {h}")));
        }
        let log_density = target.log_density(&x0);
        let prop = vec![0.0; x0.len()];
        Ok(Self { target, h, x: x0, log_density, prop, steps: 0, accepted: 0 })
    }

    pub fn state(&self) -> &[f64] {
        &self.x
    }

    /// One transition; returns the squared jump ‖X_{t+1} − X_t‖².
    pub fn step(&mut self, rng: &mut RngStream) -> f64 {
        rng.fill_normals(&mut self.prop);
        let mut jump = 0.0;
        for (p, x) in self.prop.iter_mut().zip(&self.x) {
            let dz = self.h * *p;
            jump += dz * dz;
            *p = x + dz;
        }
        let u = rng.uniform();
        let lp = self.target.log_density(&self.prop);
        self.steps += 1;
        if accept(u, lp - self.log_density) {
            std::mem::swap(&mut self.x, &mut self.prop);
            self.log_density = lp;
            self.accepted += 1;
            jump
        } else {
            0.0
        }
    }
}

/// Hug integration time and number of bounces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HugParams {
    pub time: f64,
    pub bounces: usize,
}

impl HugParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.time > 0.0 && self.time.is_finite()) || self.bounces == 0 {
            return Err(Error::domain(format!("invalid Hug parameters {self:?}")));
        }
        Ok(())
    }

    /// Per-bounce step δ = T/B.
    pub fn delta(&self) -> f64 {
        self.time / self.bounces as f64
    }
}

/// Hop scales along (λ) and orthogonal to (μ) the gradient direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HopParams {
    pub lambda: f64,
    pub mu: f64,
}

impl HopParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.mu > 0.0 && self.lambda.is_finite() && self.mu.is_finite()) {
            return Err(Error::domain(format!("invalid Hop parameters {self:?}")));
        }
        Ok(())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Runs the Hug bounce dynamics from (x, v). Returns `None` if a gradient
/// vanishes along the way.
pub(crate) fn hug_trajectory<T: LogDensity + ?Sized>(
    x: &[f64],
    v: &[f64],
    params: &HugParams,
    target: &T,
) -> Option<Vec<f64>> {
    let half = 0.5 * params.delta();
    let mut xp = x.to_vec();
    let mut vp = v.to_vec();
    let mut g = vec![0.0; x.len()];
    for _ in 0..params.bounces {
        xp.iter_mut().zip(&vp).for_each(|(a, b)| *a += half * b);
        target.log_density_grad(&xp, &mut g);
        let gn = norm(&g);
        if !(gn > 0.0 && gn.is_finite()) {
            return None;
        }
        let proj = 2.0 * dot(&vp, &g) / (gn * gn);
        vp.iter_mut().zip(&g).for_each(|(a, b)| *a -= proj * b);
        xp.iter_mut().zip(&vp).for_each(|(a, b)| *a += half * b);
    }
    Some(xp)
}

/// One Hug transition with momentum `v` and acceptance uniform `u`.
pub fn hug_step<T: LogDensity + ?Sized>(
    x: &[f64],
    v: &[f64],
    params: &HugParams,
    u: f64,
    target: &T,
) -> Result<StepOutcome> {
    check_dim(target.dim(), x.len())?;
    check_dim(x.len(), v.len())?;
    params.validate()?;
    Ok(match hug_trajectory(x, v, params, target) {
        None => StepOutcome { x_next: x.to_vec(), accepted: false, degenerate: true },
        Some(xp) => {
            let accepted = accept(u, target.log_density(&xp) - target.log_density(x));
            StepOutcome { x_next: if accepted { xp } else { x.to_vec() }, accepted, degenerate: false }
        }
    })
}

/// Gaussian law with covariance sd_along²·nnᵀ + sd_perp²·(I − nnᵀ). With no
/// direction it is isotropic with standard deviation `sd_perp`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianLaw {
    center: Vec<f64>,
    dir: Option<Vec<f64>>,
    sd_along: f64,
    sd_perp: f64,
}

impl GaussianLaw {
    pub fn isotropic(center: Vec<f64>, sd: f64) -> Result<Self> {
        if !(sd > 0.0 && sd.is_finite()) {
            return Err(Error::domain(format!("standard deviation must be positive, got {sd}")));
        }
        Ok(Self { center, dir: None, sd_along: sd, sd_perp: sd })
    }

    /// Hop proposal law at `x` given ∇log π(x).
    pub fn hop(x: &[f64], grad: &[f64], params: &HopParams) -> Result<Self> {
        check_dim(x.len(), grad.len())?;
        params.validate()?;
        let gn = norm(grad);
        if !(gn > 0.0 && gn.is_finite()) {
            return Err(Error::ZeroGradient);
        }
        Ok(Self {
            center: x.to_vec(),
            dir: Some(grad.iter().map(|g| g / gn).collect()),
            sd_along: params.lambda / gn,
            sd_perp: params.mu / gn,
        })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn direction(&self) -> Option<&[f64]> {
        self.dir.as_deref()
    }

    /// center + sd_along·z₁·n + sd_perp·(z − (zᵀn)n).
    pub fn transform(&self, z: &[f64], z1: f64) -> Vec<f64> {
        match &self.dir {
            None => self.center.iter().zip(z).map(|(c, zi)| c + self.sd_perp * zi).collect(),
            Some(n) => {
                let zn = dot(z, n);
                self.center
                    .iter()
                    .zip(z)
                    .zip(n)
                    .map(|((c, zi), ni)| c + self.sd_along * z1 * ni + self.sd_perp * (zi - zn * ni))
                    .collect()
            }
        }
    }

    pub fn sample(&self, rng: &mut RngStream) -> Vec<f64> {
        let mut z = vec![0.0; self.dim()];
        rng.fill_normals(&mut z);
        let z1 = if self.dir.is_some() { rng.normal() } else { 0.0 };
        self.transform(&z, z1)
    }

    /// Log density up to the constant −(d/2)log 2π shared by all laws of the
    /// same dimension.
    pub fn log_density(&self, y: &[f64]) -> f64 {
        let d = self.dim() as f64;
        let mut r2 = 0.0;
        let mut rn = 0.0;
        for (i, (yi, ci)) in y.iter().zip(&self.center).enumerate() {
            let r = yi - ci;
            r2 += r * r;
            if let Some(n) = &self.dir {
                rn += r * n[i];
            }
        }
        let inv_a = 1.0 / (self.sd_along * self.sd_along);
        let inv_p = 1.0 / (self.sd_perp * self.sd_perp);
        -self.sd_along.ln() - (d - 1.0) * self.sd_perp.ln() - 0.5 * (r2 * inv_p + rn * rn * (inv_a - inv_p))
    }
}

/// Metropolis-Hastings decision for a Hop proposal `y` drawn from `law_x`.
/// Returns `None` if the reverse law is undefined (zero gradient at `y`).
pub(crate) fn hop_accept<T: LogDensity + ?Sized>(
    x: &[f64],
    log_density_x: f64,
    law_x: &GaussianLaw,
    y: &[f64],
    u: f64,
    params: &HopParams,
    target: &T,
) -> Option<bool> {
    let mut gy = vec![0.0; y.len()];
    let lp_y = target.log_density_grad(y, &mut gy);
    let law_y = GaussianLaw::hop(y, &gy, params).ok()?;
    let log_ratio = lp_y - log_density_x + law_y.log_density(x) - law_x.log_density(y);
    Some(accept(u, log_ratio))
}

/// One Hop transition from base normals (z, z₁) and acceptance uniform `u`.
pub fn hop_step<T: LogDensity + ?Sized>(
    x: &[f64],
    z: &[f64],
    z1: f64,
    u: f64,
    params: &HopParams,
    target: &T,
) -> Result<StepOutcome> {
    check_dim(target.dim(), x.len())?;
    check_dim(x.len(), z.len())?;
    params.validate()?;
    let mut g = vec![0.0; x.len()];
    let lp_x = target.log_density_grad(x, &mut g);
    let law = match GaussianLaw::hop(x, &g, params) {
        Ok(law) => law,
        Err(Error::ZeroGradient) => {
            return Ok(StepOutcome { x_next: x.to_vec(), accepted: false, degenerate: true })
        }
        Err(e) => return Err(e),
    };
    let y = law.transform(z, z1);
    Ok(match hop_accept(x, lp_x, &law, &y, u, params, target) {
        None => StepOutcome { x_next: x.to_vec(), accepted: false, degenerate: true },
        Some(true) => StepOutcome { x_next: y, accepted: true, degenerate: false },
        Some(false) => StepOutcome { x_next: x.to_vec(), accepted: false, degenerate: false },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::sample_gaussians;
    use crate::special::std_normal_cdf;
    use crate::targets::TargetModel;
    use proptest::prelude::*;

    #[test]
    fn zero_increment_always_accepted() {
        let t = TargetModel::spherical(3).unwrap();
        let x = [0.5, -1.0, 2.0];
        let out = rwm_step(&RwmStepInputs { x: &x, z: &[0.0; 3], u: 1.0, h: 0.7 }, &t).unwrap();
        assert!(out.accepted);
        assert_eq!(out.x_next, x.to_vec());
    }

    #[test]
    fn spherical_acceptance_indicator() {
        let t = TargetModel::spherical(5).unwrap();
        let mut rng = RngStream::new(3, 0);
        for _ in 0..2000 {
            let x = sample_gaussians(5, &mut rng);
            let z = sample_gaussians(5, &mut rng);
            let u = rng.uniform();
            let h = 0.9;
            let xz: f64 = dot(&x, &z);
            let zz: f64 = dot(&z, &z);
            let a = (-h * xz - 0.5 * h * h * zz).exp();
            let out = rwm_step(&RwmStepInputs { x: &x, z: &z, u, h }, &t).unwrap();
            if (u - a).abs() > 1e-12 {
                assert_eq!(out.accepted, u <= a);
            }
        }
    }

    #[test]
    fn rwm_step_rejects_bad_inputs() {
        let t = TargetModel::spherical(2).unwrap();
        assert!(rwm_step(&RwmStepInputs { x: &[0.0; 2], z: &[0.0; 3], u: 0.5, h: 1.0 }, &t).is_err());
        assert!(rwm_step(&RwmStepInputs { x: &[0.0; 3], z: &[0.0; 3], u: 0.5, h: 1.0 }, &t).is_err());
    }

    #[test]
    fn optimal_scaling_acceptance() {
        let d = 1000;
        let l = 2.38;
        let t = TargetModel::spherical(d).unwrap();
        let mut acc = 0;
        let mut steps = 0;
        for rep in 0..20 {
            let mut rng = RngStream::new(99, rep);
            let x0 = t.sample(&mut rng).unwrap();
            let mut chain = RwmChain::new(&t, l / (d as f64).sqrt(), x0).unwrap();
            for _ in 0..5000 {
                chain.step(&mut rng);
            }
            acc += chain.accepted;
            steps += chain.steps;
        }
        let rate = acc as f64 / steps as f64;
        assert!((rate - 2.0 * std_normal_cdf(-l / 2.0)).abs() < 0.01, "{rate}");
    }

    fn moment_check(t: &TargetModel, mut step: impl FnMut(&[f64], &mut RngStream) -> Vec<f64>, iters: usize) {
        let d = t.dim();
        let var = t.covariance().unwrap();
        let mut rng = RngStream::new(17, d as u64);
        let mut x = t.sample(&mut rng).unwrap();
        let mut s1 = vec![0.0; d];
        let mut s2 = vec![0.0; d];
        for _ in 0..iters {
            x = step(&x, &mut rng);
            for i in 0..d {
                s1[i] += x[i];
                s2[i] += x[i] * x[i];
            }
        }
        for i in 0..d {
            let m = s1[i] / iters as f64;
            let v = s2[i] / iters as f64 - m * m;
            let sd = var[(i, i)].sqrt();
            assert!(m.abs() < 0.02 * sd.max(1.0), "coord {i}: mean {m}");
            assert!((v / var[(i, i)] - 1.0).abs() < 0.03, "coord {i}: var {v} vs {}", var[(i, i)]);
        }
    }

    #[test]
    fn rwm_leaves_gaussians_invariant() {
        for t in [TargetModel::spherical(2).unwrap(), TargetModel::diagonal(vec![0.5, 1.0, 2.0, 0.8, 1.5, 1.0, 1.2, 0.9, 1.1, 2.0]).unwrap()] {
            let h = 2.38 / (t.dim() as f64).sqrt();
            moment_check(&t, |x, rng| {
                let z = sample_gaussians(x.len(), rng);
                let u = rng.uniform();
                rwm_step(&RwmStepInputs { x, z: &z, u, h }, &t).unwrap().x_next
            }, 1_000_000);
        }
    }

    #[test]
    fn hug_then_hop_leaves_gaussians_invariant() {
        let hug = HugParams { time: 1.0, bounces: 3 };
        let hop = HopParams { lambda: 2.0, mu: 1.0 };
        for t in [TargetModel::diagonal(vec![1.0, 2.0]).unwrap(), TargetModel::spherical(10).unwrap()] {
            moment_check(&t, |x, rng| {
                let v = sample_gaussians(x.len(), rng);
                let u = rng.uniform();
                let x1 = hug_step(x, &v, &hug, u, &t).unwrap().x_next;
                let z = sample_gaussians(x.len(), rng);
                let z1 = rng.normal();
                let u = rng.uniform();
                hop_step(&x1, &z, z1, u, &hop, &t).unwrap().x_next
            }, 1_000_000);
        }
    }

    #[test]
    fn hug_is_exact_on_spherical_targets() {
        let d = 50;
        let t = TargetModel::spherical(d).unwrap();
        let mut rng = RngStream::new(5, 0);
        let params = HugParams { time: 0.5, bounces: 10 };
        let mut x = t.sample(&mut rng).unwrap();
        for _ in 0..200 {
            let v = sample_gaussians(d, &mut rng);
            let out = hug_step(&x, &v, &params, rng.uniform(), &t).unwrap();
            assert!(out.accepted);
            assert!((dot(&out.x_next, &out.x_next) - dot(&x, &x)).abs() < 1e-10);
            x = out.x_next;
        }
    }

    #[test]
    fn hug_reflections_preserve_momentum_norm() {
        let t = TargetModel::diagonal(vec![1.0, 5.0, 0.3]).unwrap();
        let x = [0.4, -1.0, 0.2];
        let mut v = vec![0.7, 0.1, -1.3];
        let v0 = norm(&v);
        let mut g = [0.0; 3];
        for _ in 0..10 {
            t.log_density_grad(&x, &mut g);
            let gn = norm(&g);
            let p = 2.0 * dot(&v, &g) / (gn * gn);
            v.iter_mut().zip(&g).for_each(|(a, b)| *a -= p * b);
        }
        assert!((norm(&v) - v0).abs() < 1e-12);
    }

    #[test]
    fn hug_single_bounce_linearisation() {
        let d = 20_000;
        let t = TargetModel::spherical(d).unwrap();
        let mut rng = RngStream::new(8, 0);
        let x = t.sample(&mut rng).unwrap();
        let v = sample_gaussians(d, &mut rng);
        let delta = 0.5;
        let out = hug_step(&x, &v, &HugParams { time: delta, bounces: 1 }, 0.5, &t).unwrap();
        let a = 1.0 - 2.0 * delta * delta / (4.0 + delta * delta);
        let b = delta * (1.0 - delta * delta / (4.0 + delta * delta));
        let resid: Vec<f64> = (0..d).map(|i| out.x_next[i] - a * x[i] - b * v[i]).collect();
        assert!(norm(&resid) / norm(&x) < 0.05);
    }

    #[test]
    fn hug_zero_gradient_is_flagged() {
        let t = TargetModel::spherical(2).unwrap();
        // Half-step lands exactly on the mode.
        let out = hug_step(&[-0.5, 0.0], &[1.0, 0.0], &HugParams { time: 1.0, bounces: 1 }, 0.5, &t).unwrap();
        assert!(out.degenerate && !out.accepted);
        assert_eq!(out.x_next, vec![-0.5, 0.0]);
        let hop = hop_step(&[0.0, 0.0], &[1.0, 1.0], 0.3, 0.5, &HopParams { lambda: 2.0, mu: 1.0 }, &t).unwrap();
        assert!(hop.degenerate);
    }

    #[test]
    fn isotropic_hop_reduces_to_gaussian_ratio() {
        let t = TargetModel::diagonal(vec![1.0, 2.0, 3.0]).unwrap();
        let x = [0.3, -0.2, 1.0];
        let (_, g) = t.log_density_and_grad(&x).unwrap();
        let p = HopParams { lambda: 1.5, mu: 1.5 };
        let law = GaussianLaw::hop(&x, &g, &p).unwrap();
        let y = [0.1, 0.4, 0.2];
        let gn = norm(&g);
        let r2: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum();
        let want = 3.0 * gn.ln() - 3.0 * p.lambda.ln() - gn * gn * r2 / (2.0 * p.lambda * p.lambda);
        assert!((law.log_density(&y) - want).abs() < 1e-12);
        let iso = GaussianLaw::isotropic(x.to_vec(), p.lambda / gn).unwrap();
        assert!((iso.log_density(&y) - want).abs() < 1e-12);
    }

    #[test]
    fn hop_density_matches_dense_gaussian() {
        let x = [0.2, 0.1, -0.4];
        let g = [1.0, -2.0, 0.5];
        let p = HopParams { lambda: 3.0, mu: 0.7 };
        let law = GaussianLaw::hop(&x, &g, &p).unwrap();
        let gn = norm(&g);
        let n: Vec<f64> = g.iter().map(|v| v / gn).collect();
        let cov = nalgebra::DMatrix::from_fn(3, 3, |i, j| {
            let id = if i == j { 1.0 } else { 0.0 };
            (p.lambda * p.lambda * n[i] * n[j] + p.mu * p.mu * (id - n[i] * n[j])) / (gn * gn)
        });
        let dense = TargetModel::dense(x.to_vec(), cov.clone()).unwrap();
        let y = [0.5, -0.3, 0.0];
        let half_logdet = 0.5 * cov.determinant().ln();
        let want = dense.log_density(&y) - half_logdet;
        assert!((law.log_density(&y) - want).abs() < 1e-12);
    }

    #[test]
    fn hop_stationary_spherical() {
        let d = 100;
        let t = TargetModel::spherical(d).unwrap();
        let p = HopParams { lambda: 20.0, mu: 1.0 };
        let mut rng = RngStream::new(21, 0);
        let mut x = t.sample(&mut rng).unwrap();
        let n = 1_000_000;
        let mut z = vec![0.0; d];
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            rng.fill_normals(&mut z);
            let z1 = rng.normal();
            let u = rng.uniform();
            x = hop_step(&x, &z, z1, u, &p, &t).unwrap().x_next;
            let q = dot(&x, &x) / d as f64;
            s1 += q;
            s2 += q * q;
        }
        let m = s1 / n as f64;
        let v = s2 / n as f64 - m * m;
        assert!((m - 1.0).abs() < 0.02, "mean {m}");
        // ‖X‖²/d has variance 2/d under the target.
        assert!((v * d as f64 / 2.0 - 1.0).abs() < 0.1, "var {v}");
    }

    proptest! {
        #[test]
        fn rwm_step_is_deterministic(seed in 0u64..500, h in 0.01f64..3.0) {
            let t = TargetModel::ar1(6, 0.4).unwrap();
            let mut rng = RngStream::new(seed, 1);
            let x = sample_gaussians(6, &mut rng);
            let z = sample_gaussians(6, &mut rng);
            let u = rng.uniform();
            let a = rwm_step(&RwmStepInputs { x: &x, z: &z, u, h }, &t).unwrap();
            let b = rwm_step(&RwmStepInputs { x: &x, z: &z, u, h }, &t).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn hug_conserves_spherical_level_sets(seed in 0u64..500, time in 0.05f64..3.0, bounces in 1usize..20) {
            let t = TargetModel::spherical(8).unwrap();
            let mut rng = RngStream::new(seed, 2);
            let x = sample_gaussians(8, &mut rng);
            let v = sample_gaussians(8, &mut rng);
            let out = hug_step(&x, &v, &HugParams { time, bounces }, rng.uniform(), &t).unwrap();
            prop_assert!((dot(&out.x_next, &out.x_next) - dot(&x, &x)).abs() < 1e-10);
        }
    }
}
