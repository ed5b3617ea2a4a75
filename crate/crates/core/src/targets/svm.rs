//! Stochastic volatility model: simulation and the latent-state posterior.

use serde::{Deserialize, Serialize};

use super::LogDensity;
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Parameters (β, φ, σ) of Y_t = βε_t e^{X_t/2}, X_{t+1} = φX_t + σε'_t.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub beta: f64,
    pub phi: f64,
    pub sigma: f64,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self { beta: 0.65, phi: 0.98, sigma: 0.15 }
    }
}

impl SvmParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::domain(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.phi.abs() < 1.0) {
            return Err(Error::domain(format!("|phi| must be below 1, got {}", self.phi)));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::domain(format!("sigma must be positive, got {}", self.sigma)));
        }
        Ok(())
    }

    /// Stationary variance σ²/(1−φ²) of the latent AR(1) process.
    pub fn stationary_variance(&self) -> f64 {
        self.sigma * self.sigma / (1.0 - self.phi * self.phi)
    }
}

/// A simulated dataset: latent log-volatilities and observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmData {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// Simulates `t_len` steps of the model.
pub fn svm_simulate(t_len: usize, params: SvmParams, rng: &mut RngStream) -> Result<SvmData> {
    params.validate()?;
    let mut x = Vec::with_capacity(t_len);
    let mut y = Vec::with_capacity(t_len);
    let mut cur = params.stationary_variance().sqrt() * rng.normal();
    for t in 0..t_len {
        if t > 0 {
            cur = params.phi * cur + params.sigma * rng.normal();
        }
        x.push(cur);
        y.push(params.beta * rng.normal() * (0.5 * cur).exp());
    }
    Ok(SvmData { x, y })
}

/// Posterior of the latent states X₁..X_T given observations Y₁..Y_T.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmPosterior {
    params: SvmParams,
    y: Vec<f64>,
    // Y_t²/β², cached.
    y2b: Vec<f64>,
}

impl SvmPosterior {
    pub fn new(y: Vec<f64>, params: SvmParams) -> Result<Self> {
        params.validate()?;
        if y.is_empty() {
            return Err(Error::domain("SVM posterior needs at least one observation"));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("non-finite observation"));
        }
        let b2 = params.beta * params.beta;
        let y2b = y.iter().map(|v| v * v / b2).collect();
        Ok(Self { params, y, y2b })
    }

    pub fn params(&self) -> SvmParams {
        self.params
    }

    pub fn observations(&self) -> &[f64] {
        &self.y
    }

    /// An exact draw from the latent AR(1) prior.
    pub fn sample_prior(&self, rng: &mut RngStream) -> Vec<f64> {
        let p = self.params;
        let mut out = Vec::with_capacity(self.y.len());
        let mut cur = p.stationary_variance().sqrt() * rng.normal();
        out.push(cur);
        for _ in 1..self.y.len() {
            cur = p.phi * cur + p.sigma * rng.normal();
            out.push(cur);
        }
        out
    }
}

impl LogDensity for SvmPosterior {
    fn dim(&self) -> usize {
        self.y.len()
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        let SvmParams { phi, sigma, .. } = self.params;
        let s2 = sigma * sigma;
        let mut obs = 0.0;
        for (xt, c) in x.iter().zip(&self.y2b) {
            obs += xt + c * (-xt).exp();
        }
        let mut trans = 0.0;
        for w in x.windows(2) {
            let e = phi * w[0] - w[1];
            trans += e * e;
        }
        -0.5 * (obs + trans / s2 + (1.0 - phi * phi) / s2 * x[0] * x[0])
    }

    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let SvmParams { phi, sigma, .. } = self.params;
        let s2 = sigma * sigma;
        let n = x.len();
        let mut obs = 0.0;
        let mut trans = 0.0;
        for t in 0..n {
            let ce = self.y2b[t] * (-x[t]).exp();
            obs += x[t] + ce;
            let mut g = -0.5 + 0.5 * ce;
            if t + 1 < n {
                let e = phi * x[t] - x[t + 1];
                trans += e * e;
                g -= phi / s2 * e;
            }
            if t > 0 {
                g -= (x[t] - phi * x[t - 1]) / s2;
            } else {
                g -= (1.0 - phi * phi) / s2 * x[0];
            }
            grad[t] = g;
        }
        -0.5 * (obs + trans / s2 + (1.0 - phi * phi) / s2 * x[0] * x[0])
    }
}
