//! Mode finding and Gaussian (Laplace) approximations.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{LogDensity, TargetModel};
use crate::error::{Error, Result};

/// Settings for [`maximize`] and [`laplace_fit`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaplaceOptions {
    /// Stop once ‖∇log π‖∞ falls below this.
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Relative step of the central-difference Hessian.
    pub fd_step: f64,
}

impl Default for LaplaceOptions {
    fn default() -> Self {
        Self { grad_tol: 1e-8, max_iter: 5_000, fd_step: 1e-4 }
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Central-difference Hessian of log π from the analytic gradient, symmetrised.
pub(crate) fn fd_hessian<T: LogDensity + ?Sized>(target: &T, x: &[f64], rel_step: f64) -> DMatrix<f64> {
    let d = x.len();
    let mut h = DMatrix::zeros(d, d);
    let mut gp = vec![0.0; d];
    let mut gm = vec![0.0; d];
    let mut xs = x.to_vec();
    for j in 0..d {
        let step = rel_step * x[j].abs().max(1.0);
        xs[j] = x[j] + step;
        target.log_density_grad(&xs, &mut gp);
        xs[j] = x[j] - step;
        target.log_density_grad(&xs, &mut gm);
        xs[j] = x[j];
        for i in 0..d {
            h[(i, j)] = (gp[i] - gm[i]) / (2.0 * step);
        }
    }
    (&h + h.transpose()) * 0.5
}

/// Locates a local maximiser of log π by damped Newton steps on the
/// finite-difference Hessian, falling back to steepest ascent wherever the
/// Hessian is not negative definite. Every step is backtracked to satisfy
/// the Armijo condition.
pub fn maximize<T: LogDensity + ?Sized>(target: &T, x0: &[f64], opts: &LaplaceOptions) -> Result<Vec<f64>> {
    let d = target.dim();
    if x0.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: x0.len() });
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("starting point must be finite"));
    }
    let mut x = x0.to_vec();
    let mut g = vec![0.0; d];
    let mut f = target.log_density_grad(&x, &mut g);
    let mut trial = vec![0.0; d];
    let mut scratch = vec![0.0; d];
    for _ in 0..opts.max_iter {
        if inf_norm(&g) <= opts.grad_tol {
            return Ok(x);
        }
        let neg_h = -fd_hessian(target, &x, opts.fd_step);
        let gv = DVector::from_column_slice(&g);
        let dir: Vec<f64> = match nalgebra::Cholesky::new(neg_h) {
            Some(ch) => ch.solve(&gv).iter().copied().collect(),
            None => g.clone(),
        };
        let slope: f64 = dir.iter().zip(&g).map(|(a, b)| a * b).sum();
        let mut step = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            for i in 0..d {
                trial[i] = x[i] + step * dir[i];
            }
            let ft = target.log_density(&trial);
            if ft.is_finite() && ft >= f + 1e-4 * step * slope {
                std::mem::swap(&mut x, &mut trial);
                f = target.log_density_grad(&x, &mut scratch);
                std::mem::swap(&mut g, &mut scratch);
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if !moved {
            // No ascent possible at working precision; accept if the gradient is near the floor.
            if inf_norm(&g) <= opts.grad_tol * 1e3 {
                return Ok(x);
            }
            return Err(Error::NoConvergence { what: "line search stalled".into(), iterations: opts.max_iter });
        }
    }
    if inf_norm(&g) <= opts.grad_tol {
        return Ok(x);
    }
    Err(Error::NoConvergence { what: format!("gradient norm {}", inf_norm(&g)), iterations: opts.max_iter })
}

/// Laplace approximation N(μ̂, Σ̂) with μ̂ a local mode and Σ̂ the inverse
/// negative Hessian there.
pub fn laplace_fit<T: LogDensity + ?Sized>(target: &T, x0: &[f64], opts: &LaplaceOptions) -> Result<TargetModel> {
    let mode = maximize(target, x0, opts)?;
    let neg_h = -fd_hessian(target, &mode, opts.fd_step);
    let ch = nalgebra::Cholesky::new(neg_h)
        .ok_or_else(|| Error::NotPositiveDefinite("negative Hessian at the mode".into()))?;
    let cov = ch.inverse();
    let cov = (&cov + cov.transpose()) * 0.5;
    TargetModel::dense(mode, cov)
}
