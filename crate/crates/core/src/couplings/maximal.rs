use crate::error::{check_dim, Error, Result};
use crate::kernels::GaussianLaw;
use crate::rng::RngStream;

/// Default bound on the number of residual draws in
/// [`maximal_independent_pair`].
pub const DEFAULT_REJECTION_CAP: usize = 100_000;

/// Fills `z` with Z_x and writes both proposals. Returns whether they
/// coincide; on coalescence `yp` is a bit-for-bit copy of `xp`.
pub(crate) fn reflection_maximal_into(
    x: &[f64],
    y: &[f64],
    h: f64,
    rng: &mut RngStream,
    z: &mut [f64],
    xp: &mut [f64],
    yp: &mut [f64],
) -> bool {
    rng.fill_normals(z);
    let log_u = rng.uniform().ln();
    for i in 0..x.len() {
        xp[i] = x[i] + h * z[i];
    }
    let mut dd = 0.0;
    let mut zd = 0.0;
    for i in 0..x.len() {
        let di = (x[i] - y[i]) / h;
        dd += di * di;
        zd += z[i] * di;
    }
    if dd == 0.0 || log_u <= -zd - 0.5 * dd {
        yp.copy_from_slice(xp);
        return true;
    }
    // Reflect Z_x in the hyperplane orthogonal to Δ.
    let p = 2.0 * zd / dd;
    for i in 0..x.len() {
        let di = (x[i] - y[i]) / h;
        yp[i] = y[i] + h * (z[i] - p * di);
    }
    false
}

/// Reflection-maximal coupling of N(X, h²I) and N(Y, h²I).
pub fn reflection_maximal_pair(
    x: &[f64],
    y: &[f64],
    h: f64,
    rng: &mut RngStream,
) -> Result<(Vec<f64>, Vec<f64>, bool)> {
    check_dim(x.len(), y.len())?;
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::domain(format!("step size must be positive, got {h}")));
    }
    let d = x.len();
    let mut z = vec![0.0; d];
    let mut xp = vec![0.0; d];
    let mut yp = vec![0.0; d];
    let equal = reflection_maximal_into(x, y, h, rng, &mut z, &mut xp, &mut yp);
    Ok((xp, yp, equal))
}

/// Maximal coupling of two Gaussian laws with independent residuals, by
/// rejection. At most `cap` residual draws are attempted.
pub fn maximal_independent_pair(
    qx: &GaussianLaw,
    qy: &GaussianLaw,
    rng: &mut RngStream,
    cap: usize,
) -> Result<(Vec<f64>, Vec<f64>, bool)> {
    check_dim(qx.dim(), qy.dim())?;
    let w = qx.sample(rng);
    if rng.uniform().ln() + qx.log_density(&w) <= qy.log_density(&w) {
        return Ok((w.clone(), w, true));
    }
    for _ in 0..cap {
        let ws = qy.sample(rng);
        if rng.uniform().ln() + qy.log_density(&ws) > qx.log_density(&ws) {
            return Ok((w, ws, false));
        }
    }
    Err(Error::RejectionCap { cap })
}
