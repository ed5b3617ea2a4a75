//! Target distributions: log-density and gradient oracles, exact sampling for
//! the Gaussian families, spectral summaries and Laplace approximations.

mod io;
mod laplace;
mod svm;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::rng::RngStream;

pub use io::{load_gaussian, load_svm_csv, save_svm_csv};
pub use laplace::{laplace_fit, maximize, LaplaceOptions};
pub use svm::{svm_simulate, SvmData, SvmParams, SvmPosterior};

/// A differentiable log-density known up to an additive constant.
///
/// Implementations may assume slices have length [`LogDensity::dim`]; the
/// checked entry point is [`TargetModel::log_density_and_grad`].
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;

    fn log_density(&self, x: &[f64]) -> f64;

    /// Writes ∇log π(x) into `grad` and returns log π(x).
    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;
}

/// Zero-mean Gaussian with diagonal covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagonalGaussian {
    variances: Vec<f64>,
    precisions: Vec<f64>,
}

impl DiagonalGaussian {
    pub fn new(variances: Vec<f64>) -> Result<Self> {
        if variances.is_empty() {
            return Err(Error::domain("diagonal gaussian needs at least one variance"));
        }
        if let Some(v) = variances.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::NotPositiveDefinite(format!("variance {v}")));
        }
        let precisions = variances.iter().map(|v| 1.0 / v).collect();
        Ok(Self { variances, precisions })
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn precisions(&self) -> &[f64] {
        &self.precisions
    }
}

/// Zero-mean Gaussian with Σᵢⱼ = r^{|i−j|} (unit marginal variances).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ar1Gaussian {
    dim: usize,
    r: f64,
}

impl Ar1Gaussian {
    pub fn new(dim: usize, r: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::domain("dimension must be positive"));
        }
        if !(r.abs() < 1.0) {
            return Err(Error::domain(format!("AR(1) correlation must satisfy |r| < 1, got {r}")));
        }
        Ok(Self { dim, r })
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    /// Ωv using the tridiagonal precision.
    fn precision_apply(&self, v: &[f64], out: &mut [f64]) {
        let d = self.dim;
        if d == 1 {
            out[0] = v[0];
            return;
        }
        let r = self.r;
        let c = 1.0 / (1.0 - r * r);
        let mid = 1.0 + r * r;
        out[0] = c * (v[0] - r * v[1]);
        for i in 1..d - 1 {
            out[i] = c * (mid * v[i] - r * (v[i - 1] + v[i + 1]));
        }
        out[d - 1] = c * (v[d - 1] - r * v[d - 2]);
    }
}

/// Gaussian with general mean and covariance; the precision and a Cholesky
/// factor of the covariance are cached at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseGaussian {
    mean: Vec<f64>,
    cov: DMatrix<f64>,
    precision: DMatrix<f64>,
    chol_lower: DMatrix<f64>,
}

impl DenseGaussian {
    pub fn new(mean: Vec<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(Error::domain("dimension must be positive"));
        }
        if cov.nrows() != d || cov.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, got: cov.nrows() });
        }
        if mean.iter().any(|m| !m.is_finite()) || cov.iter().any(|c| !c.is_finite()) {
            return Err(Error::domain("non-finite mean or covariance entry"));
        }
        let scale = cov.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        for i in 0..d {
            for j in 0..i {
                if (cov[(i, j)] - cov[(j, i)]).abs() > 1e-10 * scale.max(1.0) {
                    return Err(Error::NotPositiveDefinite(format!("covariance not symmetric at ({i},{j})")));
                }
            }
        }
        let cov = (&cov + cov.transpose()) * 0.5;
        let chol = nalgebra::Cholesky::new(cov.clone())
            .ok_or_else(|| Error::NotPositiveDefinite("Cholesky factorisation failed".into()))?;
        let precision = chol.inverse();
        let precision = (&precision + precision.transpose()) * 0.5;
        let chol_lower = chol.l();
        Ok(Self { mean, cov, precision, chol_lower })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub fn chol_lower(&self) -> &DMatrix<f64> {
        &self.chol_lower
    }

    fn centered(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(x.len(), x.iter().zip(&self.mean).map(|(a, b)| a - b))
    }
}

/// A target distribution.
#[derive(Debug, Clone)]
pub enum TargetModel {
    /// N(0, I_d).
    Spherical { dim: usize },
    Diagonal(DiagonalGaussian),
    Ar1(Ar1Gaussian),
    Dense(DenseGaussian),
    Svm(SvmPosterior),
}

/// Limits z_k² = tr(Ω^k)/d for k = −2..2 and the ellipticity z₁²z₋₁².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralSummary {
    /// z_k² stored at index k + 2.
    pub z_sq: [f64; 5],
    pub ellipticity: f64,
}

impl SpectralSummary {
    fn from_traces(z_sq: [f64; 5]) -> Self {
        Self { z_sq, ellipticity: z_sq[3] * z_sq[1] }
    }

    /// z_k² for k ∈ {−2, …, 2}.
    pub fn z_sq(&self, k: i32) -> f64 {
        assert!((-2..=2).contains(&k), "k must lie in -2..=2");
        self.z_sq[(k + 2) as usize]
    }
}

impl TargetModel {
    pub fn spherical(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::domain("dimension must be positive"));
        }
        Ok(Self::Spherical { dim })
    }

    pub fn diagonal(variances: Vec<f64>) -> Result<Self> {
        DiagonalGaussian::new(variances).map(Self::Diagonal)
    }

    pub fn ar1(dim: usize, r: f64) -> Result<Self> {
        Ar1Gaussian::new(dim, r).map(Self::Ar1)
    }

    pub fn dense(mean: Vec<f64>, cov: DMatrix<f64>) -> Result<Self> {
        DenseGaussian::new(mean, cov).map(Self::Dense)
    }

    pub fn is_gaussian(&self) -> bool {
        !matches!(self, Self::Svm(_))
    }

    /// Checked evaluation of (log π(x), ∇log π(x)).
    pub fn log_density_and_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        check_dim(self.dim(), x.len())?;
        let mut g = vec![0.0; x.len()];
        let lp = self.log_density_grad(x, &mut g);
        Ok((lp, g))
    }

    /// Ω(x − μ) for Gaussian kinds.
    pub fn precision_times_centered(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        let mut g = vec![0.0; x.len()];
        match self {
            Self::Svm(_) => return Err(Error::Unsupported("precision of a non-Gaussian target".into())),
            _ => {
                self.log_density_grad(x, &mut g);
            }
        }
        g.iter_mut().for_each(|v| *v = -*v);
        Ok(g)
    }

    /// Mean vector of a Gaussian kind.
    pub fn mean(&self) -> Result<Vec<f64>> {
        match self {
            Self::Dense(g) => Ok(g.mean.clone()),
            Self::Svm(_) => Err(Error::Unsupported("mean of a non-Gaussian target".into())),
            _ => Ok(vec![0.0; self.dim()]),
        }
    }

    /// Dense covariance matrix of a Gaussian kind.
    pub fn covariance(&self) -> Result<DMatrix<f64>> {
        let d = self.dim();
        match self {
            Self::Spherical { .. } => Ok(DMatrix::identity(d, d)),
            Self::Diagonal(g) => Ok(DMatrix::from_diagonal(&DVector::from_vec(g.variances.clone()))),
            Self::Ar1(g) => Ok(DMatrix::from_fn(d, d, |i, j| g.r.powi((i as i32 - j as i32).abs()))),
            Self::Dense(g) => Ok(g.cov.clone()),
            Self::Svm(_) => Err(Error::Unsupported("covariance of a non-Gaussian target".into())),
        }
    }

    /// An exact draw from a Gaussian target.
    pub fn sample(&self, rng: &mut RngStream) -> Result<Vec<f64>> {
        let d = self.dim();
        let mut z = vec![0.0; d];
        rng.fill_normals(&mut z);
        match self {
            Self::Spherical { .. } => {}
            Self::Diagonal(g) => z.iter_mut().zip(&g.variances).for_each(|(v, s)| *v *= s.sqrt()),
            Self::Ar1(g) => {
                let c = (1.0 - g.r * g.r).sqrt();
                for i in 1..d {
                    z[i] = g.r * z[i - 1] + c * z[i];
                }
            }
            Self::Dense(g) => {
                let x = &g.chol_lower * DVector::from_vec(z);
                return Ok(x.iter().zip(&g.mean).map(|(a, m)| a + m).collect());
            }
            Self::Svm(_) => return Err(Error::Unsupported("exact sampling from the SVM posterior".into())),
        }
        Ok(z)
    }

    /// Exact traces tr(Ω^k)/d and the ellipticity of a Gaussian target.
    pub fn spectral_summary(&self) -> Result<SpectralSummary> {
        let d = self.dim() as f64;
        match self {
            Self::Spherical { .. } => Ok(SpectralSummary::from_traces([1.0; 5])),
            Self::Diagonal(g) => {
                let mut z = [0.0; 5];
                for (k, slot) in (-2i32..=2).zip(z.iter_mut()) {
                    *slot = g.precisions.iter().map(|w| w.powi(k)).sum::<f64>() / d;
                }
                Ok(SpectralSummary::from_traces(z))
            }
            Self::Ar1(g) => {
                let n = g.dim;
                if n == 1 {
                    return Ok(SpectralSummary::from_traces([1.0; 5]));
                }
                let r2 = g.r * g.r;
                let c = 1.0 / (1.0 - r2);
                let tr_sigma2 = d + 2.0 * (1..n).map(|k| (n - k) as f64 * r2.powi(k as i32)).sum::<f64>();
                let tr_omega = c * (2.0 + (d - 2.0) * (1.0 + r2));
                let frob_omega = c * c * (2.0 + (d - 2.0) * (1.0 + r2).powi(2) + 2.0 * (d - 1.0) * r2);
                Ok(SpectralSummary::from_traces([tr_sigma2 / d, 1.0, 1.0, tr_omega / d, frob_omega / d]))
            }
            Self::Dense(g) => {
                let frob = |m: &DMatrix<f64>| m.iter().map(|v| v * v).sum::<f64>();
                Ok(SpectralSummary::from_traces([
                    frob(&g.cov) / d,
                    g.cov.trace() / d,
                    1.0,
                    g.precision.trace() / d,
                    frob(&g.precision) / d,
                ]))
            }
            Self::Svm(_) => Err(Error::Unsupported("spectral summary of the SVM posterior".into())),
        }
    }
}

impl LogDensity for TargetModel {
    fn dim(&self) -> usize {
        match self {
            Self::Spherical { dim } => *dim,
            Self::Diagonal(g) => g.variances.len(),
            Self::Ar1(g) => g.dim,
            Self::Dense(g) => g.mean.len(),
            Self::Svm(s) => s.dim(),
        }
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        match self {
            Self::Spherical { .. } => -0.5 * x.iter().map(|v| v * v).sum::<f64>(),
            Self::Diagonal(g) => -0.5 * x.iter().zip(&g.precisions).map(|(v, w)| v * v * w).sum::<f64>(),
            Self::Ar1(g) => {
                let r = g.r;
                if g.dim == 1 {
                    return -0.5 * x[0] * x[0];
                }
                let c = 1.0 / (1.0 - r * r);
                let mut q = x[0] * x[0];
                for i in 1..g.dim {
                    let e = x[i] - r * x[i - 1];
                    q += c * e * e;
                }
                -0.5 * q
            }
            Self::Dense(g) => {
                let c = g.centered(x);
                -0.5 * (&g.precision * &c).dot(&c)
            }
            Self::Svm(s) => s.log_density(x),
        }
    }

    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        match self {
            Self::Spherical { .. } => {
                let mut q = 0.0;
                for (g, v) in grad.iter_mut().zip(x) {
                    *g = -v;
                    q += v * v;
                }
                -0.5 * q
            }
            Self::Diagonal(d) => {
                let mut q = 0.0;
                for ((g, v), w) in grad.iter_mut().zip(x).zip(&d.precisions) {
                    *g = -v * w;
                    q += v * v * w;
                }
                -0.5 * q
            }
            Self::Ar1(a) => {
                a.precision_apply(x, grad);
                let mut q = 0.0;
                for (g, v) in grad.iter_mut().zip(x) {
                    q += *g * v;
                    *g = -*g;
                }
                -0.5 * q
            }
            Self::Dense(g) => {
                let c = g.centered(x);
                let oc = &g.precision * &c;
                for (dst, v) in grad.iter_mut().zip(oc.iter()) {
                    *dst = -v;
                }
                -0.5 * oc.dot(&c)
            }
            Self::Svm(s) => s.log_density_grad(x, grad),
        }
    }
}
