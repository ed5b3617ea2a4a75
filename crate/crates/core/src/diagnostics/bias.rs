use nalgebra::DMatrix;

use super::{replicate_band, Band};
use crate::error::{check_dim, Error, Result};

const OFF_DIAGONAL_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;

/// Eigenvalues and column eigenvectors of a symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

impl SymmetricEigen {
    /// V f(Λ) Vᵀ.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for j in 0..n {
            let fj = f(self.values[j]);
            scaled.column_mut(j).scale_mut(fj);
        }
        &scaled * self.vectors.transpose()
    }
}

fn off_diagonal_norm(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)] * a[(i, j)];
            }
        }
    }
    s.sqrt()
}

/// Cyclic Jacobi rotations until the off-diagonal Frobenius norm is at most
/// 1e-12 relative to the norm of the input.
pub fn symmetric_eigen(a: &DMatrix<f64>) -> Result<SymmetricEigen> {
    let n = a.nrows();
    check_dim(n, a.ncols())?;
    if n == 0 {
        return Err(Error::domain("empty matrix"));
    }
    let scale = a.norm().max(f64::MIN_POSITIVE);
    if !a.iter().all(|v| v.is_finite()) {
        return Err(Error::domain("matrix has non-finite entries"));
    }
    for i in 0..n {
        for j in 0..i {
            if (a[(i, j)] - a[(j, i)]).abs() > 1e-10 * scale {
                return Err(Error::NotPositiveDefinite(format!("matrix is not symmetric at ({i}, {j})")));
            }
        }
    }
    let mut m = (a + a.transpose()) * 0.5;
    let mut v = DMatrix::identity(n, n);
    let tol = OFF_DIAGONAL_TOL * scale;
    let mut sweeps = 0;
    while off_diagonal_norm(&m) > tol {
        if sweeps == MAX_SWEEPS {
            return Err(Error::NoConvergence { what: "Jacobi eigen sweeps".into(), iterations: sweeps });
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate_columns(&mut m, p, q, c, s);
                rotate_rows(&mut m, p, q, c, s);
                rotate_columns(&mut v, p, q, c, s);
                m[(p, q)] = 0.0;
                m[(q, p)] = 0.0;
            }
        }
    }
    Ok(SymmetricEigen { values: (0..n).map(|i| m[(i, i)]).collect(), vectors: v })
}

fn rotate_columns(m: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    for k in 0..m.nrows() {
        let (mp, mq) = (m[(k, p)], m[(k, q)]);
        m[(k, p)] = c * mp - s * mq;
        m[(k, q)] = s * mp + c * mq;
    }
}

fn rotate_rows(m: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    for k in 0..m.ncols() {
        let (mp, mq) = (m[(p, k)], m[(q, k)]);
        m[(p, k)] = c * mp - s * mq;
        m[(q, k)] = s * mp + c * mq;
    }
}

fn spd_eigen(a: &DMatrix<f64>) -> Result<SymmetricEigen> {
    let e = symmetric_eigen(a)?;
    let min = e.values.iter().copied().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        return Err(Error::NotPositiveDefinite(format!("smallest eigenvalue {min}")));
    }
    Ok(e)
}

/// Principal square root of a symmetric positive definite matrix.
pub fn spd_sqrt(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(spd_eigen(a)?.map(f64::sqrt))
}

/// W₂²(N(μ₁, Σ₁), N(μ₂, Σ₂)), a lower bound on W₂² between any two laws
/// with these means and covariances.
pub fn gelbrich_bound(mu1: &[f64], sigma1: &DMatrix<f64>, mu2: &[f64], sigma2: &DMatrix<f64>) -> Result<f64> {
    let d = mu1.len();
    check_dim(d, mu2.len())?;
    check_dim(d, sigma1.nrows())?;
    check_dim(d, sigma2.nrows())?;
    let root1 = spd_sqrt(sigma1)?;
    spd_eigen(sigma2)?;
    let inner = &root1 * sigma2 * &root1;
    let inner = (&inner + inner.transpose()) * 0.5;
    let cross: f64 = symmetric_eigen(&inner)?.values.iter().map(|v| v.max(0.0).sqrt()).sum();
    let mean_sq: f64 = mu1.iter().zip(mu2).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((mean_sq + sigma1.trace() + sigma2.trace() - 2.0 * cross).max(0.0))
}

/// Time-and-replicate average of ‖X_t − Y_t‖² after discarding the first
/// `burn_in` entries of each replicate trace.
pub fn stationary_bias_bound(traces: &[Vec<f64>], burn_in: usize) -> Result<Band> {
    if traces.is_empty() {
        return Err(Error::Insufficient("no distance traces".into()));
    }
    if let Some(short) = traces.iter().find(|t| t.len() <= burn_in) {
        return Err(Error::Insufficient(format!("trace of length {} does not exceed burn-in {burn_in}", short.len())));
    }
    let kept: Vec<&[f64]> = traces.iter().map(|t| &t[burn_in..]).collect();
    let mut band = replicate_band(&kept);
    band.ci_low = band.ci_low.max(0.0);
    Ok(band)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::couplings::{CoupledChainState, CoupledRwm, CouplingKind};
    use crate::rng::RngStream;
    use crate::targets::{LogDensity, TargetModel};
    use proptest::prelude::*;

    fn random_spd(n: usize, rng: &mut RngStream) -> DMatrix<f64> {
        let b = DMatrix::from_fn(n, n, |_, _| rng.normal());
        &b * b.transpose() + DMatrix::identity(n, n) * 0.5
    }

    #[test]
    fn jacobi_diagonalises() {
        let mut rng = RngStream::new(4, 0);
        for n in [1, 2, 5, 12] {
            let a = random_spd(n, &mut rng);
            let e = symmetric_eigen(&a).unwrap();
            let back = e.map(|v| v);
            assert!((back - &a).norm() < 1e-10 * a.norm());
            let vtv = e.vectors.transpose() * &e.vectors;
            assert!((vtv - DMatrix::identity(n, n)).norm() < 1e-12);
        }
    }

    #[test]
    fn jacobi_matches_library_eigenvalues() {
        let mut rng = RngStream::new(5, 0);
        for _ in 0..5 {
            let a = random_spd(6, &mut rng);
            let mut ours = symmetric_eigen(&a).unwrap().values;
            let mut lib: Vec<f64> = nalgebra::SymmetricEigen::new(a.clone()).eigenvalues.iter().copied().collect();
            ours.sort_by(f64::total_cmp);
            lib.sort_by(f64::total_cmp);
            for (x, y) in ours.iter().zip(&lib) {
                assert!((x - y).abs() < 1e-10 * y.abs().max(1.0));
            }
        }
    }

    #[test]
    fn sqrt_squares_back_and_rejects_indefinite() {
        let mut rng = RngStream::new(6, 0);
        let a = random_spd(4, &mut rng);
        let r = spd_sqrt(&a).unwrap();
        assert!((&r * &r - &a).norm() < 1e-10 * a.norm());
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(spd_sqrt(&bad), Err(Error::NotPositiveDefinite(_))));
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(symmetric_eigen(&asym).is_err());
    }

    #[test]
    fn commuting_hand_value() {
        let s1 = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 4.0]));
        let s2 = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![9.0, 1.0]));
        let g = gelbrich_bound(&[0.0, 0.0], &s1, &[0.0, 0.0], &s2).unwrap();
        assert!((g - 5.0).abs() < 1e-12);
        let g = gelbrich_bound(&[1.0, 0.0], &s1, &[0.0, 2.0], &s2).unwrap();
        assert!((g - 10.0).abs() < 1e-12);
    }

    /// Gelbrich distance with every matrix function from nalgebra's
    /// tridiagonal QR eigensolver.
    fn gelbrich_oracle(mu1: &[f64], s1: &DMatrix<f64>, mu2: &[f64], s2: &DMatrix<f64>) -> f64 {
        let sqrt = |m: &DMatrix<f64>| {
            let e = nalgebra::SymmetricEigen::new(m.clone());
            let mut v = e.eigenvectors.clone();
            for j in 0..v.ncols() {
                let f = e.eigenvalues[j].max(0.0).sqrt();
                v.column_mut(j).scale_mut(f);
            }
            &v * e.eigenvectors.transpose()
        };
        let r = sqrt(s1);
        let inner = &r * s2 * &r;
        let cross = sqrt(&((&inner + inner.transpose()) * 0.5)).trace();
        let m: f64 = mu1.iter().zip(mu2).map(|(a, b)| (a - b) * (a - b)).sum();
        m + s1.trace() + s2.trace() - 2.0 * cross
    }

    #[test]
    fn random_pairs_match_oracle() {
        let mut rng = RngStream::new(7, 0);
        for _ in 0..10 {
            let (s1, s2) = (random_spd(5, &mut rng), random_spd(5, &mut rng));
            let mu1: Vec<f64> = (0..5).map(|_| rng.normal()).collect();
            let mu2: Vec<f64> = (0..5).map(|_| rng.normal()).collect();
            let ours = gelbrich_bound(&mu1, &s1, &mu2, &s2).unwrap();
            assert!((ours - gelbrich_oracle(&mu1, &s1, &mu2, &s2)).abs() < 1e-8);
        }
    }

    #[test]
    fn bias_bound_basics() {
        assert_eq!(stationary_bias_bound(&[vec![0.0; 10], vec![0.0; 10]], 5).unwrap().estimate, 0.0);
        assert!(stationary_bias_bound(&[vec![1.0; 5]], 5).is_err());
        assert!(stationary_bias_bound(&[], 0).is_err());
        let b = stationary_bias_bound(&[vec![9.0, 1.0, 3.0], vec![9.0, 2.0, 2.0]], 1).unwrap();
        assert_eq!(b.estimate, 2.0);
    }

    fn coupled_distance_trace(
        tx: &TargetModel,
        ty: &TargetModel,
        kind: CouplingKind,
        h: f64,
        steps: usize,
        rng: &mut RngStream,
    ) -> Vec<f64> {
        let d = tx.dim();
        let state = CoupledChainState::new(vec![0.0; d], vec![0.0; d]).unwrap();
        let mut c = CoupledRwm::cross_target(tx, ty, kind, h, state).unwrap();
        (0..steps)
            .map(|_| {
                c.step(rng).unwrap();
                c.state().distance_sq()
            })
            .collect()
    }

    #[test]
    fn shifted_normals_bias_exceeds_squared_shift() {
        let m = 1.5;
        let tx = TargetModel::spherical(1).unwrap();
        let ty = TargetModel::dense(vec![m], DMatrix::identity(1, 1)).unwrap();
        let mut rng = RngStream::new(8, 0);
        let traces: Vec<Vec<f64>> =
            (0..4).map(|_| coupled_distance_trace(&tx, &ty, CouplingKind::Crn, 2.4, 20_000, &mut rng)).collect();
        let b = stationary_bias_bound(&traces, 2_000).unwrap();
        let g = gelbrich_bound(&[0.0], &DMatrix::identity(1, 1), &[m], &DMatrix::identity(1, 1)).unwrap();
        assert!((g - m * m).abs() < 1e-12);
        assert!(b.estimate >= g, "{} < {g}", b.estimate);
        assert!(b.estimate < g + 1.0, "{}", b.estimate);
    }

    #[test]
    fn matched_gaussian_bias_bound_dominates_gelbrich() {
        let mut rng = RngStream::new(9, 0);
        let d = 3;
        for _ in 0..10 {
            let (s1, s2) = (random_spd(d, &mut rng) * 0.5, random_spd(d, &mut rng) * 0.5);
            let mu2: Vec<f64> = (0..d).map(|_| 0.5 * rng.normal()).collect();
            let tx = TargetModel::dense(vec![0.0; d], s1.clone()).unwrap();
            let ty = TargetModel::dense(mu2.clone(), s2.clone()).unwrap();
            let traces: Vec<Vec<f64>> = (0..2)
                .map(|_| coupled_distance_trace(&tx, &ty, CouplingKind::Gcrn, 1.0, 20_000, &mut rng))
                .collect();
            let b = stationary_bias_bound(&traces, 2_000).unwrap();
            let g = gelbrich_bound(&vec![0.0; d], &s1, &mu2, &s2).unwrap();
            assert!(b.estimate >= g, "{} < {g}", b.estimate);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn gelbrich_symmetric_and_zero_on_equal(seed in any::<u64>(), n in 1usize..6) {
            let mut rng = RngStream::new(seed, 0);
            let (s1, s2) = (random_spd(n, &mut rng), random_spd(n, &mut rng));
            let mu1: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
            let mu2: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
            let ab = gelbrich_bound(&mu1, &s1, &mu2, &s2).unwrap();
            let ba = gelbrich_bound(&mu2, &s2, &mu1, &s1).unwrap();
            prop_assert!((ab - ba).abs() < 1e-9 * ab.max(1.0));
            prop_assert!(ab > 1e-10);
            prop_assert!(gelbrich_bound(&mu1, &s1, &mu1, &s1).unwrap() < 1e-10);
        }

        #[test]
        fn commuting_pairs_reduce_to_root_difference(
            a in prop::collection::vec(0.1f64..10.0, 1..6),
            shift in -2.0f64..2.0,
        ) {
            let b: Vec<f64> = a.iter().rev().copied().collect();
            let s1 = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(a.clone()));
            let s2 = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(b.clone()));
            let mu2 = vec![shift; a.len()];
            let expected: f64 = a.iter().zip(&b).map(|(x, y)| (x.sqrt() - y.sqrt()).powi(2)).sum::<f64>()
                + shift * shift * a.len() as f64;
            let g = gelbrich_bound(&vec![0.0; a.len()], &s1, &mu2, &s2).unwrap();
            prop_assert!((g - expected).abs() < 1e-10 * expected.max(1.0));
        }
    }
}
