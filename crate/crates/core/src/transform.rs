//! Independent numeric oracles for the convolution equations and the
//! transform identities.
//!
//! [`conv_gaussian`] convolves a tabulated density with a Gaussian kernel
//! on the same grid, which turns the Deny equation `mu = mu * sigma` and
//! its two-sided variant `sigma1 * mu = sigma2 * mu` into residuals that
//! are independent of the closed-form checkers. Kernel weights are cell
//! integrals of the Gaussian (CDF differences), so the scheme is second
//! order in the step and refining the grid shrinks the residual
//! accordingly.
//!
//! [`fourier_identity_residual`] compares the closed-form log
//! characteristic function at shifted and unshifted times over sampled
//! `u`-tuples; both sides are exact, so the residual reflects only the
//! model.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gaussian::ProcessModel;
use crate::measures::GaussianMeasure;
use crate::rng::{draw_u_tuples, UConstraint};
use crate::stats::normal_cdf;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("grid dimension must be 1 or 2, got {0}")]
    BadDim(usize),
    #[error("grid shape/value count mismatch")]
    ShapeMismatch,
    #[error("step must be positive")]
    BadStep,
    #[error("grid too small for the truncated kernel: axis {axis} needs margin {needed} cells but has only {have}")]
    GridTooSmall { axis: usize, needed: usize, have: usize },
    #[error("degenerate kernel axes need grid-aligned means (mean {mean} vs step {step})")]
    ShiftNotAligned { mean: f64, step: f64 },
    #[error("unsupported kernel: rank-deficient covariance must be axis-aligned")]
    UnsupportedKernel,
    #[error("kernel dimension {kernel} does not match grid dimension {grid}")]
    DimMismatch { kernel: usize, grid: usize },
    #[error("csv parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Density values tabulated on a regular 1-D or 2-D grid, row-major
/// (axis 0 slowest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDensity {
    pub origin: Vec<f64>,
    pub step: f64,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl GridDensity {
    pub fn new(
        origin: Vec<f64>,
        step: f64,
        shape: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self, GridError> {
        if origin.len() != shape.len() || !(1..=2).contains(&shape.len()) {
            return Err(GridError::BadDim(shape.len()));
        }
        if !(step > 0.0) || !step.is_finite() {
            return Err(GridError::BadStep);
        }
        if shape.iter().product::<usize>() != values.len() || values.is_empty() {
            return Err(GridError::ShapeMismatch);
        }
        Ok(Self { origin, step, shape, values })
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    /// Tabulates `f` on the grid covering `[lower, upper]` with `step`.
    pub fn tabulate(
        lower: &[f64],
        upper: &[f64],
        step: f64,
        f: impl Fn(&[f64]) -> f64,
    ) -> Result<Self, GridError> {
        if !(step > 0.0) {
            return Err(GridError::BadStep);
        }
        let dim = lower.len();
        let shape: Vec<usize> = (0..dim)
            .map(|k| ((upper[k] - lower[k]) / step).round() as usize + 1)
            .collect();
        let mut values = Vec::with_capacity(shape.iter().product());
        match dim {
            1 => {
                for i in 0..shape[0] {
                    values.push(f(&[lower[0] + i as f64 * step]));
                }
            }
            2 => {
                for i in 0..shape[0] {
                    for j in 0..shape[1] {
                        values.push(f(&[lower[0] + i as f64 * step, lower[1] + j as f64 * step]));
                    }
                }
            }
            d => return Err(GridError::BadDim(d)),
        }
        GridDensity::new(lower.to_vec(), step, shape, values)
    }

    pub fn value(&self, idx: &[usize]) -> f64 {
        match self.dim() {
            1 => self.values[idx[0]],
            _ => self.values[idx[0] * self.shape[1] + idx[1]],
        }
    }

    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        self.origin[axis] + i as f64 * self.step
    }

    /// Writes the spec'd CSV layout: a header row
    /// `# dim,origin...,step,shape...` followed by the values in row-major
    /// order.
    pub fn to_csv(&self) -> String {
        let mut head = format!("# {}", self.dim());
        for o in &self.origin {
            head.push_str(&format!(",{o}"));
        }
        head.push_str(&format!(",{}", self.step));
        for s in &self.shape {
            head.push_str(&format!(",{s}"));
        }
        let mut out = head;
        out.push('\n');
        for v in &self.values {
            out.push_str(&format!("{v}\n"));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, GridError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let head = lines.next().ok_or_else(|| GridError::Parse("empty file".into()))?;
        let head = head
            .strip_prefix('#')
            .ok_or_else(|| GridError::Parse("missing # header".into()))?;
        let fields: Vec<&str> = head.split(',').map(|s| s.trim()).collect();
        let dim: usize = fields[0]
            .parse()
            .map_err(|_| GridError::Parse("bad dim".into()))?;
        if fields.len() != 1 + dim + 1 + dim {
            return Err(GridError::Parse("header field count".into()));
        }
        let origin: Vec<f64> = fields[1..1 + dim]
            .iter()
            .map(|s| s.parse().map_err(|_| GridError::Parse("bad origin".into())))
            .collect::<Result<_, _>>()?;
        let step: f64 = fields[1 + dim]
            .parse()
            .map_err(|_| GridError::Parse("bad step".into()))?;
        let shape: Vec<usize> = fields[2 + dim..]
            .iter()
            .map(|s| s.parse().map_err(|_| GridError::Parse("bad shape".into())))
            .collect::<Result<_, _>>()?;
        let values: Vec<f64> = lines
            .map(|l| l.trim().parse().map_err(|_| GridError::Parse("bad value".into())))
            .collect::<Result<_, _>>()?;
        GridDensity::new(origin, step, shape, values)
    }
}

/// Convolution output: the full grid plus the per-axis margin (in cells)
/// inside which values are invalid because the truncated kernel ran off
/// the tabulated data.
#[derive(Debug, Clone)]
pub struct Convolved {
    pub density: GridDensity,
    /// `(left, right)` invalid cell counts per axis.
    pub margin: Vec<(usize, usize)>,
}

impl Convolved {
    /// Iterates interior (valid) flat indices.
    fn interior_indices(&self) -> Vec<usize> {
        let shape = &self.density.shape;
        match shape.len() {
            1 => {
                let (l, r) = self.margin[0];
                (l..shape[0].saturating_sub(r)).collect()
            }
            _ => {
                let (l0, r0) = self.margin[0];
                let (l1, r1) = self.margin[1];
                let mut out = Vec::new();
                for i in l0..shape[0].saturating_sub(r0) {
                    for j in l1..shape[1].saturating_sub(r1) {
                        out.push(i * shape[1] + j);
                    }
                }
                out
            }
        }
    }

    pub fn interior_sup(&self) -> f64 {
        self.interior_indices()
            .into_iter()
            .fold(0.0f64, |a, i| a.max(self.density.values[i].abs()))
    }
}

/// One-dimensional kernel: cell-integrated Gaussian weights over a range
/// of cell offsets.
struct Kernel1D {
    offsets: std::ops::RangeInclusive<i64>,
    weights: Vec<f64>,
}

fn kernel_1d(mean: f64, sd: f64, step: f64) -> Result<Kernel1D, GridError> {
    if sd == 0.0 {
        let cells = mean / step;
        if (cells - cells.round()).abs() > 1e-9 {
            return Err(GridError::ShiftNotAligned { mean, step });
        }
        let j = cells.round() as i64;
        return Ok(Kernel1D { offsets: j..=j, weights: vec![1.0] });
    }
    let lo = ((mean - 8.0 * sd) / step).floor() as i64;
    let hi = ((mean + 8.0 * sd) / step).ceil() as i64;
    let weights: Vec<f64> = (lo..=hi)
        .map(|j| {
            let a = (j as f64 - 0.5) * step;
            let b = (j as f64 + 0.5) * step;
            normal_cdf((b - mean) / sd) - normal_cdf((a - mean) / sd)
        })
        .collect();
    Ok(Kernel1D { offsets: lo..=hi, weights })
}

/// Convolution `f * sigma` on the grid of `f`.
///
/// Diagonal covariances (any zero-variance axes included) convolve as
/// separable 1-D passes; a full 2x2 nondegenerate covariance uses a dense
/// kernel of cell-probability products after whitening is unavailable.
/// Rank-deficient non-axis-aligned kernels are rejected.
pub fn conv_gaussian(f: &GridDensity, sigma: &GaussianMeasure) -> Result<Convolved, GridError> {
    if sigma.dim() != f.dim() {
        return Err(GridError::DimMismatch { kernel: sigma.dim(), grid: f.dim() });
    }
    let dim = f.dim();
    let diag_ok = (0..dim).all(|a| {
        (0..dim).all(|b| a == b || sigma.cov[(a, b)].abs() < 1e-14)
    });
    if diag_ok {
        let mut values = f.values.clone();
        let mut margin = vec![(0usize, 0usize); dim];
        for axis in 0..dim {
            let var = sigma.cov[(axis, axis)];
            let sd = if var > 0.0 { var.sqrt() } else { 0.0 };
            let kernel = kernel_1d(sigma.mean[axis], sd, f.step)?;
            if kernel.weights.len() == 1 && *kernel.offsets.start() == 0 {
                continue; // identity along this axis
            }
            let current = GridDensity {
                origin: f.origin.clone(),
                step: f.step,
                shape: f.shape.clone(),
                values,
            };
            let (next, m) = convolve_axis_separable(&current, axis, &kernel)?;
            values = next;
            margin[axis] = m;
        }
        let density = GridDensity {
            origin: f.origin.clone(),
            step: f.step,
            shape: f.shape.clone(),
            values,
        };
        return Ok(Convolved { density, margin });
    }
    if dim == 2 {
        return conv_full_2d(f, sigma);
    }
    Err(GridError::UnsupportedKernel)
}

/// Separable pass of a 1-D kernel along `axis` of a 1-D or 2-D grid.
fn convolve_axis_separable(
    f: &GridDensity,
    axis: usize,
    kernel: &Kernel1D,
) -> Result<(Vec<f64>, (usize, usize)), GridError> {
    let n_axis = f.shape[axis];
    let lo = *kernel.offsets.start();
    let hi = *kernel.offsets.end();
    let left = hi.max(0) as usize;
    let right = (-lo).max(0) as usize;
    if left + right >= n_axis {
        return Err(GridError::GridTooSmall {
            axis,
            needed: left + right,
            have: n_axis.saturating_sub(1),
        });
    }
    let mut out = vec![0.0; f.values.len()];
    match f.dim() {
        1 => {
            for i in left..n_axis - right {
                let mut acc = 0.0;
                for (w, j) in kernel.weights.iter().zip(lo..=hi) {
                    acc += w * f.values[(i as i64 - j) as usize];
                }
                out[i] = acc;
            }
        }
        _ => {
            let (n0, n1) = (f.shape[0], f.shape[1]);
            if axis == 0 {
                for i in left..n0 - right {
                    for col in 0..n1 {
                        let mut acc = 0.0;
                        for (w, j) in kernel.weights.iter().zip(lo..=hi) {
                            acc += w * f.values[(i as i64 - j) as usize * n1 + col];
                        }
                        out[i * n1 + col] = acc;
                    }
                }
            } else {
                for row in 0..n0 {
                    for i in left..n1 - right {
                        let mut acc = 0.0;
                        for (w, j) in kernel.weights.iter().zip(lo..=hi) {
                            acc += w * f.values[row * n1 + (i as i64 - j) as usize];
                        }
                        out[row * n1 + i] = acc;
                    }
                }
            }
        }
    }
    Ok((out, (left, right)))
}

/// Dense 2-D kernel for a full nondegenerate covariance: point-sampled
/// density times cell area, normalized.
fn conv_full_2d(f: &GridDensity, sigma: &GaussianMeasure) -> Result<Convolved, GridError> {
    let det = sigma.cov[(0, 0)] * sigma.cov[(1, 1)] - sigma.cov[(0, 1)] * sigma.cov[(1, 0)];
    if det <= 0.0 {
        return Err(GridError::UnsupportedKernel);
    }
    let inv = [
        sigma.cov[(1, 1)] / det,
        -sigma.cov[(0, 1)] / det,
        -sigma.cov[(1, 0)] / det,
        sigma.cov[(0, 0)] / det,
    ];
    let h = f.step;
    let r0 = ((sigma.mean[0].abs() + 8.0 * sigma.cov[(0, 0)].sqrt()) / h).ceil() as i64;
    let r1 = ((sigma.mean[1].abs() + 8.0 * sigma.cov[(1, 1)].sqrt()) / h).ceil() as i64;
    let (n0, n1) = (f.shape[0], f.shape[1]);
    if 2 * r0 as usize >= n0 || 2 * r1 as usize >= n1 {
        return Err(GridError::GridTooSmall {
            axis: if 2 * r0 as usize >= n0 { 0 } else { 1 },
            needed: 2 * r0.max(r1) as usize,
            have: n0.min(n1).saturating_sub(1),
        });
    }
    let mut weights = Vec::with_capacity(((2 * r0 + 1) * (2 * r1 + 1)) as usize);
    let mut total = 0.0;
    for j0 in -r0..=r0 {
        for j1 in -r1..=r1 {
            let x = j0 as f64 * h - sigma.mean[0];
            let y = j1 as f64 * h - sigma.mean[1];
            let q = inv[0] * x * x + (inv[1] + inv[2]) * x * y + inv[3] * y * y;
            let w = (-0.5 * q).exp();
            weights.push(w);
            total += w;
        }
    }
    for w in &mut weights {
        *w /= total;
    }
    let mut out = vec![0.0; f.values.len()];
    let (r0u, r1u) = (r0 as usize, r1 as usize);
    for i0 in r0u..n0 - r0u {
        for i1 in r1u..n1 - r1u {
            let mut acc = 0.0;
            let mut w_iter = weights.iter();
            for j0 in -r0..=r0 {
                for j1 in -r1..=r1 {
                    let w = *w_iter.next().unwrap();
                    acc += w
                        * f.values[(i0 as i64 - j0) as usize * n1 + (i1 as i64 - j1) as usize];
                }
            }
            out[i0 * n1 + i1] = acc;
        }
    }
    Ok(Convolved {
        density: GridDensity {
            origin: f.origin.clone(),
            step: f.step,
            shape: f.shape.clone(),
            values: out,
        },
        margin: vec![(r0u, r0u), (r1u, r1u)],
    })
}

/// Deny residual: `sup |f - f * sigma|` over the valid interior,
/// normalized by `sup |f|` there.
pub fn check_deny(f: &GridDensity, sigma: &GaussianMeasure) -> Result<f64, GridError> {
    let conv = conv_gaussian(f, sigma)?;
    let idx = conv.interior_indices();
    let mut diff = 0.0f64;
    let mut sup_f = 0.0f64;
    for i in idx {
        diff = diff.max((f.values[i] - conv.density.values[i]).abs());
        sup_f = sup_f.max(f.values[i].abs());
    }
    Ok(diff / sup_f.max(f64::MIN_POSITIVE))
}

/// Two-sided residual: `sup |f * sigma1 - f * sigma2|` over the common
/// valid interior, normalized by `sup |f * sigma1|` there.
pub fn check_two_sided(
    f: &GridDensity,
    sigma1: &GaussianMeasure,
    sigma2: &GaussianMeasure,
) -> Result<f64, GridError> {
    let c1 = conv_gaussian(f, sigma1)?;
    let c2 = conv_gaussian(f, sigma2)?;
    let margin: Vec<(usize, usize)> = c1
        .margin
        .iter()
        .zip(&c2.margin)
        .map(|(&(l1, r1), &(l2, r2))| (l1.max(l2), r1.max(r2)))
        .collect();
    let joined = Convolved { density: c1.density.clone(), margin };
    let idx = joined.interior_indices();
    let mut diff = 0.0f64;
    let mut sup = 0.0f64;
    for i in idx {
        diff = diff.max((c1.density.values[i] - c2.density.values[i]).abs());
        sup = sup.max(c1.density.values[i].abs());
    }
    Ok(diff / sup.max(f64::MIN_POSITIVE))
}

/// Which transform identity to test, fixing the shift argument and the
/// `u`-constraint subspace.
#[derive(Debug, Clone)]
pub enum MeasureKind {
    /// `e_lambda` on the full space: `sum u_i = 0`.
    Exp(DVector<f64>),
    /// `e_lambda` on the subspace spanned by the orthonormal rows of the
    /// basis: `sum u_i` orthogonal to `H`.
    Subspace { basis: DMatrix<f64>, lambda: DVector<f64> },
    /// Brown-Resnick: diagonal `H`, `lambda = 1/d`, total component sum 0.
    BrownResnick,
}

/// Max over sampled `u`-tuples of
/// `|log phi(times) - log phi(times + s)|` at first argument
/// `u_1 - i lambda`. Both sides are closed form, so the residual reflects
/// only the model.
pub fn fourier_identity_residual(
    model: &ProcessModel,
    kind: &MeasureKind,
    times: &[f64],
    s: f64,
    draws: usize,
    seed: u64,
) -> f64 {
    let d = model.dim();
    let (lambda, constraint) = match kind {
        MeasureKind::Exp(lambda) => (lambda.clone(), UConstraint::SumZero),
        MeasureKind::Subspace { basis, lambda } => {
            let proj = basis.transpose() * basis;
            (&proj * lambda, UConstraint::SumPerp(proj))
        }
        MeasureKind::BrownResnick => {
            (DVector::from_element(d, 1.0 / d as f64), UConstraint::TotalZero)
        }
    };
    let shifted: Vec<f64> = times.iter().map(|t| t + s).collect();
    let mut worst = 0.0f64;
    for u in draw_u_tuples(times.len(), d, draws, seed, &constraint) {
        let base = model.log_char_shifted(times, &lambda, &u);
        let moved = model.log_char_shifted(&shifted, &lambda, &u);
        worst = worst.max((moved - base).norm());
    }
    worst
}
