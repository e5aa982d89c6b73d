//! Equi-correlated Gaussian knockoffs.
//!
//! The sampler estimates a ridge-regularized covariance `Σ`, picks
//! `s = min(2 λ_min(Σ), s_max)`, and draws
//!
//! ```text
//! X̃ = (X - μ)(I - s Σ⁻¹) + U Lᵀ + μ,    L Lᵀ = 2sI - s² Σ⁻¹,    U ~ N(0, I)
//! ```
//!
//! so that `[X | X̃]` has covariance `[[Σ, Σ - sI], [Σ - sI, Σ]]`.

use log::warn;
use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;
use crate::rng::{self, STREAM_KNOCKOFF};

/// Eigenvalue floor used when repairing the knockoff covariance.
pub const EIGEN_FLOOR: f64 = 1e-10;
const JITTER_START: f64 = 1e-10;
const JITTER_CAP: f64 = 1e-6;

/// Fitted sampling parameters. Immutable once built.
#[derive(Debug, Clone)]
pub struct KnockoffModel {
    pub mean: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub s: f64,
    pub lambda_min: f64,
    /// `I - s Σ⁻¹`.
    pub mean_multiplier: DMatrix<f64>,
    /// Knockoff conditional covariance after positive-definiteness repair.
    pub knockoff_cov: DMatrix<f64>,
    /// Lower Cholesky factor of `knockoff_cov`.
    pub chol_factor: DMatrix<f64>,
    /// Diagonal jitter that was needed for the factorization (0 if none).
    pub jitter: f64,
}

impl KnockoffModel {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// An original design and its knockoff copy, row aligned.
#[derive(Debug, Clone)]
pub struct KnockoffPair {
    pub original: FeatureMatrix,
    pub knockoff: FeatureMatrix,
}

impl KnockoffPair {
    /// `[X | X̃]`: originals in columns `0..p`, knockoffs in `p..2p`.
    pub fn augmented(&self) -> DMatrix<f64> {
        let (n, p) = (self.original.nrows(), self.original.ncols());
        let mut out = DMatrix::zeros(n, 2 * p);
        out.columns_mut(0, p).copy_from(self.original.values());
        out.columns_mut(p, p).copy_from(self.knockoff.values());
        out
    }
}

/// Column means and `X̄ᵀX̄ / (n-1) + ridge·I`.
pub fn estimate_covariance(x: &FeatureMatrix, ridge: f64) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "covariance estimation needs at least 2 rows, got {n}"
        )));
    }
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::InvalidInput(format!("ridge must be non-negative, got {ridge}")));
    }
    let v = x.values();
    let mean = DVector::from_iterator(v.ncols(), v.column_iter().map(|c| c.mean()));
    let mut centered = v.clone();
    for (mut col, mu) in centered.column_iter_mut().zip(mean.iter()) {
        col.add_scalar_mut(-mu);
    }
    let mut sigma = centered.tr_mul(&centered) / (n as f64 - 1.0);
    symmetrize(&mut sigma);
    for d in 0..sigma.nrows() {
        sigma[(d, d)] += ridge;
    }
    Ok((mean, sigma))
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}

/// `min(2 λ_min(Σ), s_max)`; fails when Σ is not positive definite.
pub fn compute_s(sigma: &DMatrix<f64>, s_max: f64) -> Result<f64> {
    if !(s_max > 0.0) {
        return Err(Error::InvalidInput(format!("s_max must be positive, got {s_max}")));
    }
    let lambda_min = min_eigenvalue(sigma);
    if !(lambda_min > 0.0) {
        return Err(Error::Numerical(format!(
            "covariance is not positive definite (lambda_min = {lambda_min:e})"
        )));
    }
    Ok((2.0 * lambda_min).min(s_max))
}

/// Symmetrizes, clips eigenvalues below [`EIGEN_FLOOR`], and factors with a
/// doubling diagonal jitter capped at 1e-6. Returns `(repaired, L, jitter)`.
pub fn repair_and_factor(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>, f64)> {
    let mut sym = m.clone();
    symmetrize(&mut sym);
    let eig = SymmetricEigen::new(sym.clone());
    if eig.eigenvalues.min() < EIGEN_FLOOR {
        let clipped = eig.eigenvalues.map(|l| l.max(EIGEN_FLOOR));
        let q = &eig.eigenvectors;
        sym = q * DMatrix::from_diagonal(&clipped) * q.transpose();
        symmetrize(&mut sym);
    }
    if let Some(ch) = Cholesky::new(sym.clone()) {
        return Ok((sym, ch.l(), 0.0));
    }
    let mut jitter = JITTER_START;
    while jitter <= JITTER_CAP {
        let mut shifted = sym.clone();
        for d in 0..shifted.nrows() {
            shifted[(d, d)] += jitter;
        }
        if let Some(ch) = Cholesky::new(shifted.clone()) {
            return Ok((shifted, ch.l(), jitter));
        }
        jitter *= 2.0;
    }
    Err(Error::Numerical(
        "knockoff covariance could not be made positive definite".into(),
    ))
}

pub fn fit_knockoff_model(x: &FeatureMatrix, ridge: f64, s_max: f64) -> Result<KnockoffModel> {
    let (n, p) = (x.nrows(), x.ncols());
    if n <= p {
        warn!("knockoff fit with n = {n} <= p = {p}; covariance estimate will lean on the ridge");
    }
    let (mean, sigma) = estimate_covariance(x, ridge)?;
    fit_from_moments(mean, sigma, s_max)
}

/// Builds the sampler from a known mean and covariance.
pub fn fit_from_moments(mean: DVector<f64>, sigma: DMatrix<f64>, s_max: f64) -> Result<KnockoffModel> {
    let p = mean.len();
    if sigma.shape() != (p, p) {
        return Err(Error::Dimension(format!(
            "covariance is {:?} for a mean of length {p}",
            sigma.shape()
        )));
    }
    let lambda_min = min_eigenvalue(&sigma);
    let s = compute_s(&sigma, s_max)?;
    let chol = Cholesky::new(sigma.clone())
        .ok_or_else(|| Error::Numerical("covariance is not invertible".into()))?;
    // s Σ⁻¹ by solving rather than inverting
    let s_sigma_inv = chol.solve(&(DMatrix::<f64>::identity(p, p) * s));
    let mean_multiplier = DMatrix::<f64>::identity(p, p) - &s_sigma_inv;
    let raw = DMatrix::<f64>::identity(p, p) * (2.0 * s) - &s_sigma_inv * s;
    let (knockoff_cov, chol_factor, jitter) = repair_and_factor(&raw)?;
    Ok(KnockoffModel {
        mean,
        sigma,
        s,
        lambda_min,
        mean_multiplier,
        knockoff_cov,
        chol_factor,
        jitter,
    })
}

/// Draws one knockoff copy of `x`. Deterministic in `(x, model, seed)`.
pub fn sample_knockoffs(x: &FeatureMatrix, model: &KnockoffModel, seed: u64) -> Result<KnockoffPair> {
    let (n, p) = (x.nrows(), x.ncols());
    if p != model.dim() {
        return Err(Error::Dimension(format!(
            "matrix has {p} columns but the knockoff model has dimension {}",
            model.dim()
        )));
    }
    let mut rng = rng::seeded(seed, STREAM_KNOCKOFF);
    let mut noise = DMatrix::zeros(n, p);
    for i in 0..n {
        for j in 0..p {
            noise[(i, j)] = rng::standard_normal(&mut rng);
        }
    }
    let mut centered = x.values().clone();
    for (mut col, mu) in centered.column_iter_mut().zip(model.mean.iter()) {
        col.add_scalar_mut(-mu);
    }
    let mut knock = centered * &model.mean_multiplier + noise * model.chol_factor.transpose();
    for (mut col, mu) in knock.column_iter_mut().zip(model.mean.iter()) {
        col.add_scalar_mut(*mu);
    }
    let knockoff = FeatureMatrix::new(knock, x.column_ids().to_vec())?;
    Ok(KnockoffPair {
        original: x.clone(),
        knockoff,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn two_point_covariance() {
        let x = FeatureMatrix::from_rows(&[vec![1.0], vec![3.0]]).unwrap();
        let (mean, sigma) = estimate_covariance(&x, 0.0).unwrap();
        assert_eq!(mean[0], 2.0);
        assert_eq!(sigma[(0, 0)], 2.0);
    }

    #[test]
    fn zero_variance_plus_ridge() {
        let x = FeatureMatrix::from_rows(&[vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let (_, sigma) = estimate_covariance(&x, 0.002).unwrap();
        assert_eq!(sigma, DMatrix::identity(2, 2) * 0.002);
    }

    #[test]
    fn covariance_needs_two_rows() {
        let x = FeatureMatrix::from_rows(&[vec![1.0]]).unwrap();
        assert!(estimate_covariance(&x, 0.0).is_err());
    }

    #[test]
    fn s_examples() {
        assert_abs_diff_eq!(compute_s(&DMatrix::identity(3, 3), 0.95).unwrap(), 0.95, epsilon = 1e-12);
        let small = DMatrix::identity(3, 3) * 0.1;
        assert_abs_diff_eq!(compute_s(&small, 0.95).unwrap(), 0.2, epsilon = 1e-12);
        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(compute_s(&singular, 0.95).is_err());
    }

    #[test]
    fn identical_rows_fail_downstream() {
        let x = FeatureMatrix::from_rows(&[vec![1.0, 2.0], vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
        let err = fit_knockoff_model(&x, 0.0, 0.95).unwrap_err();
        assert!(matches!(err, Error::Numerical(_)));
    }

    #[test]
    fn identity_covariance_model() {
        let m = fit_from_moments(DVector::zeros(2), DMatrix::identity(2, 2), 0.95).unwrap();
        assert_abs_diff_eq!(m.s, 0.95);
        assert_abs_diff_eq!(m.mean_multiplier, DMatrix::identity(2, 2) * 0.05, epsilon = 1e-12);
        assert_abs_diff_eq!(m.knockoff_cov, DMatrix::identity(2, 2) * 0.9975, epsilon = 1e-12);
        assert_eq!(m.jitter, 0.0);
    }

    #[test]
    fn whitened_data_model() {
        // rows ±e1, ±e2 scaled so the sample covariance is exactly I
        let a = (1.5f64).sqrt();
        let x = FeatureMatrix::from_rows(&[
            vec![a, 0.0],
            vec![-a, 0.0],
            vec![0.0, a],
            vec![0.0, -a],
        ])
        .unwrap();
        let m = fit_knockoff_model(&x, 0.0, 0.95).unwrap();
        assert_abs_diff_eq!(m.sigma, DMatrix::identity(2, 2), epsilon = 1e-12);
        assert_abs_diff_eq!(m.s, 0.95, epsilon = 1e-12);
        assert_abs_diff_eq!(m.knockoff_cov, DMatrix::identity(2, 2) * 0.9975, epsilon = 1e-12);
    }

    #[test]
    fn scalar_model() {
        let m = fit_from_moments(DVector::zeros(1), DMatrix::from_element(1, 1, 2.0), 0.95).unwrap();
        assert_abs_diff_eq!(m.s, 0.95);
        assert_abs_diff_eq!(m.knockoff_cov[(0, 0)], 1.44875, epsilon = 1e-12);
    }

    #[test]
    fn boundary_s_is_repaired() {
        // 2·λ_min < s_max, so the raw knockoff covariance is singular
        let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 0.9, 0.9, 1.0]);
        let m = fit_from_moments(DVector::zeros(2), sigma.clone(), 0.95).unwrap();
        assert_abs_diff_eq!(m.s, 0.2, epsilon = 1e-12);
        assert!(m.s <= 2.0 * m.lambda_min + 1e-12);
        let llt = &m.chol_factor * m.chol_factor.transpose();
        assert_abs_diff_eq!(llt, m.knockoff_cov, epsilon = 1e-8);
        let raw = DMatrix::<f64>::identity(2, 2) * 0.4
            - Cholesky::new(sigma).unwrap().inverse() * 0.04;
        assert_abs_diff_eq!(m.knockoff_cov, raw, epsilon = 1e-8);
    }

    #[test]
    fn sampling_is_deterministic_and_checks_dims() {
        let x = FeatureMatrix::from_rows(&[vec![0.1, 0.3], vec![-1.0, 2.0], vec![0.5, 0.5]]).unwrap();
        let m = fit_knockoff_model(&x, 0.002, 0.95).unwrap();
        let a = sample_knockoffs(&x, &m, 7).unwrap();
        let b = sample_knockoffs(&x, &m, 7).unwrap();
        assert_eq!(a.knockoff.values(), b.knockoff.values());
        let c = sample_knockoffs(&x, &m, 8).unwrap();
        assert_ne!(a.knockoff.values(), c.knockoff.values());
        let wrong = FeatureMatrix::from_rows(&[vec![1.0]]).unwrap();
        assert!(sample_knockoffs(&wrong, &m, 7).is_err());
    }

    #[test]
    fn single_row_uses_model_mean() {
        let m = fit_from_moments(DVector::from_vec(vec![10.0]), DMatrix::identity(1, 1), 0.95).unwrap();
        let x = FeatureMatrix::from_rows(&[vec![10.0]]).unwrap();
        let pair = sample_knockoffs(&x, &m, 1).unwrap();
        let v = pair.knockoff.values()[(0, 0)];
        // centered input is zero, so the row is mean + noise·sqrt(0.9975)
        assert!(v.is_finite() && (v - 10.0).abs() < 6.0);
        assert_eq!(pair.augmented().shape(), (1, 2));
    }
}
