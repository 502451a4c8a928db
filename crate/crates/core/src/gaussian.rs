//! d-variate Gaussian process models and their finite-dimensional tools.
//!
//! A model is a triple `(m, Sigma, d)`: a mean function `m(t)` in `R^d` and
//! a cross-covariance function `Sigma(t1, t2)` in `R^{d x d}` giving the
//! covariance of `xi(t1)` against `xi(t2)`. `Sigma(t1, t2)` need not be
//! symmetric in its two time arguments; the structural identity is
//! `Sigma(t2, t1) = Sigma(t1, t2)^T`.
//!
//! Models are assembled from a catalog of primitives (two-sided Brownian
//! motion, fractional Brownian motion, stationary Ornstein–Uhlenbeck,
//! shifted copies, rank-one `Z*f(t)` processes) and combinators (independent
//! stacking, constant linear mixing, deterministic drift). Each combinator
//! preserves positive semidefiniteness by construction.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

use crate::rng::stream_rng;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("covariance block matrix is not positive semidefinite: min eigenvalue {min_eig:e} below tolerance {tol:e}")]
    NotPsd { min_eig: f64, tol: f64 },
    #[error("covariance factorization failed after jitter escalation (last jitter {last_jitter:e})")]
    DegenerateCovariance { last_jitter: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("model must have zero mean (found |m({t})| = {norm:e})")]
    NotCentered { t: f64, norm: f64 },
    #[error("invalid model parameter: {0}")]
    InvalidParameter(String),
}

type MeanFn = Arc<dyn Fn(f64) -> DVector<f64> + Send + Sync>;
type CovFn = Arc<dyn Fn(f64, f64) -> DMatrix<f64> + Send + Sync>;

/// A d-variate Gaussian process model.
#[derive(Clone)]
pub struct ProcessModel {
    dim: usize,
    label: String,
    mean: MeanFn,
    cov: CovFn,
}

impl fmt::Debug for ProcessModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProcessModel")
            .field("dim", &self.dim)
            .field("label", &self.label)
            .finish()
    }
}

/// Drift/coefficient functions are linear combinations over the basis
/// `{1, t, |t|, t^2}` per component.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct BasisCoeffs {
    pub one: f64,
    pub t: f64,
    pub abs_t: f64,
    pub t_sq: f64,
}

impl BasisCoeffs {
    pub fn eval(&self, t: f64) -> f64 {
        self.one + self.t * t + self.abs_t * t.abs() + self.t_sq * t * t
    }

    pub fn from_slice(c: &[f64]) -> Result<Self, ModelError> {
        if c.len() != 4 {
            return Err(ModelError::InvalidParameter(format!(
                "basis coefficient list must have 4 entries (1, t, |t|, t^2), got {}",
                c.len()
            )));
        }
        Ok(Self { one: c[0], t: c[1], abs_t: c[2], t_sq: c[3] })
    }
}

fn fbm_cov(h: f64, s: f64, t: f64) -> f64 {
    0.5 * (s.abs().powf(2.0 * h) + t.abs().powf(2.0 * h) - (s - t).abs().powf(2.0 * h))
}

impl ProcessModel {
    pub fn new(dim: usize, label: impl Into<String>, mean: MeanFn, cov: CovFn) -> Self {
        Self { dim, label: label.into(), mean, cov }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn mean(&self, t: f64) -> DVector<f64> {
        (self.mean)(t)
    }

    pub fn cov(&self, t1: f64, t2: f64) -> DMatrix<f64> {
        (self.cov)(t1, t2)
    }

    // ----- catalog primitives -----

    /// Two-sided Brownian motion: two independent one-sided motions glued
    /// at 0, so `Cov(W(s), W(t)) = min(|s|, |t|)` for same-sign arguments
    /// and 0 otherwise; `Var W(t) = |t|`.
    pub fn brownian() -> Self {
        Self::new(
            1,
            "bm",
            Arc::new(|_| DVector::zeros(1)),
            Arc::new(|s, t| {
                let c = if s * t >= 0.0 { s.abs().min(t.abs()) } else { 0.0 };
                DMatrix::from_element(1, 1, c)
            }),
        )
    }

    /// Fractional Brownian motion on the line with Hurst index `h`,
    /// `Var = |t|^(2h)`.
    pub fn fractional_brownian(h: f64) -> Result<Self, ModelError> {
        if !(h > 0.0 && h <= 1.0) {
            return Err(ModelError::InvalidParameter(format!(
                "Hurst index must lie in (0, 1], got {h}"
            )));
        }
        Ok(Self::new(
            1,
            format!("fbm(h={h})"),
            Arc::new(|_| DVector::zeros(1)),
            Arc::new(move |s, t| DMatrix::from_element(1, 1, fbm_cov(h, s, t))),
        ))
    }

    /// Stationary Ornstein–Uhlenbeck process,
    /// `Cov(s, t) = scale^2 exp(-rate |t - s|)`.
    pub fn ornstein_uhlenbeck(rate: f64, scale: f64) -> Result<Self, ModelError> {
        if rate <= 0.0 || scale <= 0.0 {
            return Err(ModelError::InvalidParameter(
                "OU rate and scale must be positive".into(),
            ));
        }
        Ok(Self::new(
            1,
            format!("ou(rate={rate},scale={scale})"),
            Arc::new(|_| DVector::zeros(1)),
            Arc::new(move |s, t| {
                DMatrix::from_element(1, 1, scale * scale * (-rate * (t - s).abs()).exp())
            }),
        ))
    }

    /// Rank-one process `Z * f(t)` for a single standard Gaussian `Z` shared
    /// across components; `Cov(s, t) = f(s) f(t)^T`.
    pub fn gaussian_coefficient(coeffs: Vec<BasisCoeffs>) -> Result<Self, ModelError> {
        if coeffs.is_empty() {
            return Err(ModelError::InvalidParameter(
                "coefficient process needs at least one component".into(),
            ));
        }
        let d = coeffs.len();
        let f = move |t: f64, cs: &[BasisCoeffs]| {
            DVector::from_iterator(cs.len(), cs.iter().map(|c| c.eval(t)))
        };
        let cov_coeffs = coeffs.clone();
        Ok(Self::new(
            d,
            "coeff",
            Arc::new(move |_| DVector::zeros(d)),
            Arc::new(move |s, t| {
                let fs = f(s, &cov_coeffs);
                let ft = f(t, &cov_coeffs);
                &fs * ft.transpose()
            }),
        ))
    }

    /// Time-shifted copy `xi(t + h)`.
    pub fn shifted(inner: ProcessModel, h: f64) -> Self {
        let m = inner.mean.clone();
        let c = inner.cov.clone();
        Self::new(
            inner.dim,
            format!("shifted({},{h})", inner.label),
            Arc::new(move |t| m(t + h)),
            Arc::new(move |s, t| c(s + h, t + h)),
        )
    }

    /// Independent stacking; dimensions add and covariance is block
    /// diagonal.
    pub fn stack(parts: Vec<ProcessModel>) -> Result<Self, ModelError> {
        if parts.is_empty() {
            return Err(ModelError::InvalidParameter("stack of zero models".into()));
        }
        let dim: usize = parts.iter().map(|p| p.dim).sum();
        let label = format!(
            "stack({})",
            parts.iter().map(|p| p.label.as_str()).collect::<Vec<_>>().join(",")
        );
        let mean_parts: Vec<(usize, MeanFn)> = parts.iter().map(|p| (p.dim, p.mean.clone())).collect();
        let cov_parts: Vec<(usize, CovFn)> = parts.iter().map(|p| (p.dim, p.cov.clone())).collect();
        Ok(Self::new(
            dim,
            label,
            Arc::new(move |t| {
                let mut v = DVector::zeros(dim);
                let mut off = 0;
                for (d, m) in &mean_parts {
                    v.rows_mut(off, *d).copy_from(&m(t));
                    off += d;
                }
                v
            }),
            Arc::new(move |s, t| {
                let mut m = DMatrix::zeros(dim, dim);
                let mut off = 0;
                for (d, c) in &cov_parts {
                    m.view_mut((off, off), (*d, *d)).copy_from(&c(s, t));
                    off += d;
                }
                m
            }),
        ))
    }

    /// Linear mixing `xi'(t) = B xi(t)` by a constant matrix.
    pub fn mix(matrix: DMatrix<f64>, inner: ProcessModel) -> Result<Self, ModelError> {
        if matrix.ncols() != inner.dim {
            return Err(ModelError::DimensionMismatch {
                expected: inner.dim,
                got: matrix.ncols(),
            });
        }
        let dim = matrix.nrows();
        let m = inner.mean.clone();
        let c = inner.cov.clone();
        let b1 = matrix.clone();
        let b2 = matrix.clone();
        Ok(Self::new(
            dim,
            format!("mix({})", inner.label),
            Arc::new(move |t| &b1 * m(t)),
            Arc::new(move |s, t| &b2 * c(s, t) * b2.transpose()),
        ))
    }

    /// Adds the deterministic drift `g(t)` (basis coefficients per
    /// component) to the mean.
    pub fn with_drift(inner: ProcessModel, drift: Vec<BasisCoeffs>) -> Result<Self, ModelError> {
        if drift.len() != inner.dim {
            return Err(ModelError::DimensionMismatch {
                expected: inner.dim,
                got: drift.len(),
            });
        }
        let m = inner.mean.clone();
        Ok(Self::new(
            inner.dim,
            format!("drift({})", inner.label),
            Arc::new(move |t| {
                let mut v = m(t);
                for (vi, g) in v.iter_mut().zip(&drift) {
                    *vi += g.eval(t);
                }
                v
            }),
            inner.cov.clone(),
        ))
    }

    /// Replaces the mean by an arbitrary closure. Used by
    /// `stationarity::stationarize_drift` for the covariance-generated mean
    /// term; not part of the JSON catalog surface.
    pub fn with_mean_fn(inner: ProcessModel, label: String, mean: MeanFn) -> Self {
        Self::new(inner.dim, label, mean, inner.cov.clone())
    }

    /// Deterministic model with zero covariance and the given mean.
    pub fn deterministic_mean(mean: Vec<BasisCoeffs>) -> Result<Self, ModelError> {
        let zero = Self::gaussian_coefficient(vec![BasisCoeffs::default(); mean.len()])?;
        Self::with_drift(zero, mean)
    }

    // ----- finite-dimensional assembly -----

    /// `nd x nd` block matrix with (i, j)-block `Sigma(t_i, t_j)`.
    ///
    /// Fails when the assembled matrix has an eigenvalue below
    /// `-1e-8 * trace/(nd)`, which signals an invalid custom model.
    pub fn cov_block(&self, times: &[f64]) -> Result<DMatrix<f64>, ModelError> {
        let n = times.len();
        let d = self.dim;
        let mut big = DMatrix::zeros(n * d, n * d);
        for (i, &ti) in times.iter().enumerate() {
            for (j, &tj) in times.iter().enumerate() {
                let block = self.cov(ti, tj);
                big.view_mut((i * d, j * d), (d, d)).copy_from(&block);
            }
        }
        let trace = big.trace();
        let tol = 1e-8 * (trace / (n * d) as f64).abs().max(1e-300);
        let min_eig = big
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .fold(f64::INFINITY, |a, &b| a.min(b));
        if min_eig < -tol {
            return Err(ModelError::NotPsd { min_eig, tol });
        }
        Ok(big)
    }

    /// Mean of `(xi(t_1), ..., xi(t_n))` as one `nd`-vector, time-major.
    pub fn mean_block(&self, times: &[f64]) -> DVector<f64> {
        let d = self.dim;
        let mut v = DVector::zeros(times.len() * d);
        for (i, &t) in times.iter().enumerate() {
            v.rows_mut(i * d, d).copy_from(&self.mean(t));
        }
        v
    }

    /// Covariance matrix (variogram) of the increment `xi(t2) - xi(t1)`:
    /// `Gamma = Sigma(t2,t2) - Sigma(t1,t2) - Sigma(t2,t1) + Sigma(t1,t1)`.
    pub fn variogram(&self, t1: f64, t2: f64) -> DMatrix<f64> {
        self.cov(t2, t2) - self.cov(t1, t2) - self.cov(t2, t1) + self.cov(t1, t1)
    }

    /// Reusable sampler of `(xi(t_1), ..., xi(t_n))` draws, holding the
    /// factorized covariance.
    pub fn path_sampler(&self, times: &[f64]) -> Result<PathSampler, ModelError> {
        let cov = self.cov_block(times)?;
        let mean = self.mean_block(times);
        // Zero covariance short-circuits the factorization so deterministic
        // models reproduce their mean exactly.
        let factor = if cov.iter().all(|&x| x == 0.0) {
            None
        } else {
            Some(jittered_cholesky(&cov)?)
        };
        Ok(PathSampler { mean, factor })
    }

    /// i.i.d. draws of `(xi(t_1), ..., xi(t_n))` via a jittered Cholesky
    /// factorization of [`ProcessModel::cov_block`]. Replicate `r` uses the
    /// substream `(seed, r)`, so results are independent of scheduling.
    pub fn sample_paths(
        &self,
        times: &[f64],
        replicates: usize,
        seed: u64,
    ) -> Result<PathSample, ModelError> {
        assert!(replicates >= 1, "replicates must be at least 1");
        let sampler = self.path_sampler(times)?;
        let values: Vec<DVector<f64>> = (0..replicates)
            .into_par_iter()
            .map(|r| sampler.draw(&mut stream_rng(seed, PATH_STREAM, r as u64)))
            .collect();
        Ok(PathSample {
            times: times.to_vec(),
            dim: self.dim,
            seed,
            values,
        })
    }

    /// Log Laplace transform of the finite-dimensional distribution:
    /// `log E exp{sum_i <u_i, xi(t_i)>}
    ///  = sum_i <u_i, m(t_i)> + 1/2 sum_ij <u_i, Sigma(t_i,t_j) u_j>`.
    pub fn log_laplace_fidi(&self, times: &[f64], u: &[DVector<f64>]) -> f64 {
        assert_eq!(times.len(), u.len(), "one u vector per time");
        let mut lin = 0.0;
        let mut quad = 0.0;
        for (i, &ti) in times.iter().enumerate() {
            lin += u[i].dot(&self.mean(ti));
            for (j, &tj) in times.iter().enumerate() {
                quad += u[i].dot(&(self.cov(ti, tj) * &u[j]));
            }
        }
        lin + 0.5 * quad
    }

    /// Log characteristic function with complex first argument
    /// `u_1 - i*lambda`:
    /// `log phi = i sum_j <w_j, m(t_j)> - 1/2 sum_jk <w_j, Sigma(t_j,t_k) w_k>`
    /// evaluated directly as a quadratic form at complex arguments, so no
    /// branch cuts arise.
    pub fn log_char_shifted(
        &self,
        times: &[f64],
        lambda: &DVector<f64>,
        u: &[DVector<f64>],
    ) -> Complex64 {
        assert_eq!(times.len(), u.len(), "one u vector per time");
        assert_eq!(lambda.len(), self.dim, "lambda must have model dimension");
        let d = self.dim;
        let n = times.len();
        let i_unit = Complex64::new(0.0, 1.0);
        // w_1 = u_1 - i lambda, w_j = u_j for j >= 2
        let w: Vec<DVector<Complex64>> = (0..n)
            .map(|j| {
                DVector::from_iterator(
                    d,
                    (0..d).map(|k| {
                        let re = u[j][k];
                        let im = if j == 0 { -lambda[k] } else { 0.0 };
                        Complex64::new(re, im)
                    }),
                )
            })
            .collect();
        let mut lin = Complex64::new(0.0, 0.0);
        let mut quad = Complex64::new(0.0, 0.0);
        for (j, &tj) in times.iter().enumerate() {
            let mj = self.mean(tj);
            for k in 0..d {
                lin += w[j][k] * mj[k];
            }
            for (l, &tl) in times.iter().enumerate() {
                let sig = self.cov(tj, tl);
                for a in 0..d {
                    for b in 0..d {
                        quad += w[j][a] * sig[(a, b)] * w[l][b];
                    }
                }
            }
        }
        i_unit * lin - 0.5 * quad
    }
}

const PATH_STREAM: u64 = 0x7061746873; // tag for path sampling substreams

/// Cholesky factor of `cov + jitter*I` with the jitter policy
/// `1e-12 * (1 + max diag)` escalated by 100x up to three retries.
fn jittered_cholesky(cov: &DMatrix<f64>) -> Result<DMatrix<f64>, ModelError> {
    let max_diag = cov.diagonal().iter().fold(0.0f64, |a, &b| a.max(b));
    let mut jitter = 1e-12 * (1.0 + max_diag);
    for _ in 0..4 {
        let mut m = cov.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += jitter;
        }
        if let Some(chol) = nalgebra::linalg::Cholesky::new(m) {
            return Ok(chol.l());
        }
        jitter *= 100.0;
    }
    Err(ModelError::DegenerateCovariance { last_jitter: jitter / 100.0 })
}

/// Mean and covariance factor of one finite-dimensional distribution.
#[derive(Debug, Clone)]
pub struct PathSampler {
    mean: DVector<f64>,
    factor: Option<DMatrix<f64>>,
}

impl PathSampler {
    /// One draw of the `nd`-vector `(xi(t_1), ..., xi(t_n))`, consuming
    /// `nd` standard normals from `rng` (none for deterministic models).
    pub fn draw(&self, rng: &mut rand_chacha::ChaCha12Rng) -> DVector<f64> {
        match &self.factor {
            None => self.mean.clone(),
            Some(l) => {
                let nd = self.mean.len();
                let z =
                    DVector::from_iterator(nd, (0..nd).map(|_| StandardNormal.sample(rng)));
                &self.mean + l * z
            }
        }
    }
}

/// Sampled paths: `replicates` rows, each the `nd`-vector
/// `(xi(t_1), ..., xi(t_n))` in time-major component order.
#[derive(Debug, Clone)]
pub struct PathSample {
    pub times: Vec<f64>,
    pub dim: usize,
    pub seed: u64,
    pub values: Vec<DVector<f64>>,
}

impl PathSample {
    pub fn replicates(&self) -> usize {
        self.values.len()
    }

    /// Value of component `comp` at time index `time_idx` in replicate `r`.
    pub fn value(&self, r: usize, time_idx: usize, comp: usize) -> f64 {
        self.values[r][time_idx * self.dim + comp]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn brownian_cov_block_at_1_2() {
        let bm = ProcessModel::brownian();
        let c = bm.cov_block(&[1.0, 2.0]).unwrap();
        assert_eq!(c, DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 2.0]));
    }

    #[test]
    fn single_time_block_is_cov_tt() {
        let ou = ProcessModel::ornstein_uhlenbeck(1.0, 2.0).unwrap();
        let c = ou.cov_block(&[0.7]).unwrap();
        assert_eq!(c, ou.cov(0.7, 0.7));
    }

    /// Hand oracle for the rank-one example xi1 = Z t - t^2/2, xi2 = Z - t
    /// (lambda = 1): with E Z^2 = 1 the centred parts are (Z t, Z), so
    /// Cov((Z t1, Z), (Z t2, Z)) = [[t1 t2, t1], [t2, 1]].
    #[test]
    fn rank_one_example_blocks() {
        let model = nonzero_b_model(1.0);
        let c = model.cov_block(&[1.0, 2.0]).unwrap();
        let expect = DMatrix::from_row_slice(
            4,
            4,
            &[
                1.0, 1.0, 2.0, 1.0, //
                1.0, 1.0, 2.0, 1.0, //
                2.0, 2.0, 4.0, 2.0, //
                1.0, 1.0, 2.0, 1.0,
            ],
        );
        assert_eq!(c, expect);
        assert_eq!(model.cov(1.0, 1.0), DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]));
        assert_eq!(model.cov(1.0, 2.0), DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 2.0, 1.0]));
        assert_eq!(model.cov(2.0, 2.0), DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 1.0]));
    }

    pub(crate) fn nonzero_b_model(lambda: f64) -> ProcessModel {
        let coeff = ProcessModel::gaussian_coefficient(vec![
            BasisCoeffs { t: 1.0, ..Default::default() },
            BasisCoeffs { one: 1.0, ..Default::default() },
        ])
        .unwrap();
        ProcessModel::with_drift(
            coeff,
            vec![
                BasisCoeffs { t_sq: -0.5 * lambda, ..Default::default() },
                BasisCoeffs { t: -lambda, ..Default::default() },
            ],
        )
        .unwrap()
    }

    #[test]
    fn variogram_brownian_unit_interval() {
        let bm = ProcessModel::brownian();
        let g = bm.variogram(0.0, 1.0);
        assert_eq!(g, DMatrix::from_element(1, 1, 1.0));
        assert_eq!(bm.variogram(0.7, 0.7), DMatrix::from_element(1, 1, 0.0));
    }

    #[test]
    fn variogram_fbm_power_law() {
        let fbm = ProcessModel::fractional_brownian(0.75).unwrap();
        let g = fbm.variogram(0.0, 2.0);
        assert_abs_diff_eq!(g[(0, 0)], 2.0_f64.powf(1.5), epsilon = 1e-12);
    }

    #[test]
    fn deterministic_model_samples_equal_mean() {
        let model = ProcessModel::deterministic_mean(vec![BasisCoeffs {
            one: 2.0,
            t: 1.0,
            ..Default::default()
        }])
        .unwrap();
        let s = model.sample_paths(&[0.0, 1.0, 2.0], 10, 5).unwrap();
        for r in 0..10 {
            assert_eq!(s.values[r], DVector::from_vec(vec![2.0, 3.0, 4.0]));
        }
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let bm = ProcessModel::brownian();
        let a = bm.sample_paths(&[0.5, 1.0], 17, 99).unwrap();
        let b = bm.sample_paths(&[0.5, 1.0], 17, 99).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert_eq!(x, y);
        }
        let c = bm.sample_paths(&[0.5, 1.0], 17, 100).unwrap();
        assert_ne!(a.values[0], c.values[0]);
    }

    #[test]
    fn brownian_moments_match_law_of_large_numbers() {
        let bm = ProcessModel::brownian();
        let n = 100_000;
        let s = bm.sample_paths(&[1.0], n, 7).unwrap();
        let mean: f64 = s.values.iter().map(|v| v[0]).sum::<f64>() / n as f64;
        let var: f64 =
            s.values.iter().map(|v| (v[0] - mean) * (v[0] - mean)).sum::<f64>() / (n - 1) as f64;
        // 4 sigma band around 0 at Var = 1.
        assert!(mean.abs() < 4.0 * (1.0 / n as f64).sqrt() * 4.0, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn log_laplace_trivial_values() {
        let bm = ProcessModel::brownian();
        assert_eq!(bm.log_laplace_fidi(&[1.0], &[DVector::zeros(1)]), 0.0);
        let v = bm.log_laplace_fidi(&[1.0], &[DVector::from_element(1, 1.0)]);
        assert_abs_diff_eq!(v, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn log_char_reduces_to_laplace_at_zero_u() {
        let bm = ProcessModel::brownian();
        let lambda = DVector::from_element(1, 0.8);
        let z = bm.log_char_shifted(&[1.5], &lambda, &[DVector::zeros(1)]);
        let psi = bm.log_laplace_fidi(&[1.5], std::slice::from_ref(&lambda));
        assert_abs_diff_eq!(z.re, psi, epsilon = 1e-14);
        assert_abs_diff_eq!(z.im, 0.0, epsilon = 1e-14);
    }

    /// Pre-build hand oracle: for BM at t = 4, lambda = 1, u = 0.3 the
    /// exponent is -(u - i)^2 * 4 / 2 = 2(1 - u^2) + 4u i.
    #[test]
    fn log_char_hand_expansion() {
        let bm = ProcessModel::brownian();
        let z = bm.log_char_shifted(
            &[4.0],
            &DVector::from_element(1, 1.0),
            &[DVector::from_element(1, 0.3)],
        );
        assert_abs_diff_eq!(z.re, 2.0 * (1.0 - 0.09), epsilon = 1e-12);
        assert_abs_diff_eq!(z.im, 4.0 * 0.3, epsilon = 1e-12);
    }

    #[test]
    fn non_psd_mixing_is_caught() {
        // A hand-rolled broken model: claims cross-covariance larger than
        // the variances allow.
        let bad = ProcessModel::new(
            1,
            "bad",
            Arc::new(|_| DVector::zeros(1)),
            Arc::new(|s, t| DMatrix::from_element(1, 1, if s == t { 1.0 } else { 5.0 })),
        );
        assert!(matches!(bad.cov_block(&[0.0, 1.0]), Err(ModelError::NotPsd { .. })));
    }
}
