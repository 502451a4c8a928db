//! Monte Carlo layer: particle-system simulation on windows, empirical
//! intensities with stationarity hypothesis tests, and Brown-Resnick
//! max-stable processes.
//!
//! The ambient Poisson process has infinite mass, so simulation samples on
//! a buffered window: the buffer radius is chosen from Gaussian quantiles
//! so a path started outside it enters the window with probability at most
//! `delta`, and the induced truncation bias bound is recorded on the
//! output rather than hidden. The Brown-Resnick sampler similarly stops
//! processing Poisson atoms once the remaining ones cannot change the
//! running maximum except on an event of pilot-estimated probability
//! 1e-4, and reports per-replicate atom counts and the bound.

use nalgebra::DVector;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gaussian::{ModelError, ProcessModel};
use crate::measures::{BoxRegion, Measure, MeasureError};
use crate::rng::{splitmix64, stream_rng};
use crate::stats::{binomial_half_two_sided, fisher_combine, normal_cdf, normal_quantile};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("delta must lie in (0, 1e-4], got {0:e}")]
    BadDelta(f64),
    #[error("mean envelope is not finite over the requested times; pass a model with finite means or widen the window explicitly")]
    UnboundedMean,
    #[error("dimension mismatch between model ({model}) and measure ({measure})")]
    DimMismatch { model: usize, measure: usize },
    #[error("epsilon must lie in (0, 1) and max_atoms be at least 1")]
    BadBrParams,
    #[error("z thresholds must be strictly positive")]
    BadThreshold,
    #[error("mc sample count must be at least 1000")]
    TooFewSamples,
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One realization of the particle system observed at `times`, restricted
/// to points with at least one time slice inside `window`.
#[derive(Debug, Clone)]
pub struct PointConfig {
    /// Points `(x_i + xi_i(t_1), ..., x_i + xi_i(t_n))`, time-major.
    pub points: Vec<DVector<f64>>,
    pub times: Vec<f64>,
    pub window: BoxRegion,
    /// Documented bound on the expected number of points missed by the
    /// window buffering.
    pub truncation_delta: f64,
}

/// Replicate-indexed Brown-Resnick sample on a time grid.
#[derive(Debug, Clone)]
pub struct MaxStableSample {
    /// `replicates` rows of `(eta(t_1), ..., eta(t_n))`, time-major.
    pub values: Vec<DVector<f64>>,
    pub times: Vec<f64>,
    pub dim: usize,
    pub stop_stats: Vec<StopStat>,
    /// Per-replicate probability bound on the stopping-rule exceedance.
    pub residual_bound: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StopStat {
    pub atoms_used: u32,
    pub exhausted: bool,
}

impl MaxStableSample {
    pub fn replicates(&self) -> usize {
        self.values.len()
    }

    pub fn value(&self, r: usize, time_idx: usize, comp: usize) -> f64 {
        self.values[r][time_idx * self.dim + comp]
    }

    /// True when any replicate ran out of atoms before the stopping rule
    /// fired; such samples are flagged, never silently returned.
    pub fn any_exhausted(&self) -> bool {
        self.stop_stats.iter().any(|s| s.exhausted)
    }
}

/// Outcome of a statistical test.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub method: String,
    pub cells: usize,
}

/// Per-replicate seed derivation; injective in the replicate index for a
/// fixed base seed.
pub fn replicate_seed(seed: u64, replicate: u64) -> u64 {
    splitmix64(seed ^ splitmix64(replicate))
}

const SIM_PATH: u64 = 0x73696d70;
const BR_ARRIVAL: u64 = 0x62726172;
const BR_PATH: u64 = 0x62727061;
const BR_PILOT: u64 = 0x6272706c;
const FIDI: u64 = 0x66696469;

/// Simulates one particle-system realization.
///
/// Poisson points are sampled on the window buffered per coordinate by
/// `r_k = q * max_t sd_k(t) + max_t |m_k(t)|` where `q` is the two-sided
/// Gaussian quantile at level `delta`, each point gets an independent path
/// over `times`, and points with no slice inside the window are dropped.
pub fn simulate_system(
    measure: &Measure,
    model: &ProcessModel,
    times: &[f64],
    window: &BoxRegion,
    delta: f64,
    seed: u64,
) -> Result<PointConfig, SimError> {
    if !(delta > 0.0 && delta <= 1e-4) {
        return Err(SimError::BadDelta(delta));
    }
    let d = model.dim();
    if measure.dim() != d {
        return Err(SimError::DimMismatch { model: d, measure: measure.dim() });
    }
    if window.dim() != d {
        return Err(SimError::DimMismatch { model: d, measure: window.dim() });
    }
    let q = normal_quantile(1.0 - delta / 2.0);
    let mut radius = vec![0.0f64; d];
    for &t in times {
        let mean = model.mean(t);
        let cov = model.cov(t, t);
        for k in 0..d {
            if !mean[k].is_finite() || !cov[(k, k)].is_finite() {
                return Err(SimError::UnboundedMean);
            }
            let sd = cov[(k, k)].max(0.0).sqrt();
            radius[k] = radius[k].max(q * sd + mean[k].abs());
        }
    }
    let buffered = window.buffered(&radius)?;
    let bias_bound = delta * measure.mass_on_box(&buffered)?.value;

    let locations = measure.sample_on_box(&buffered, seed)?;
    let sampler = model.path_sampler(times)?;
    let n = times.len();
    let mut points = Vec::new();
    for (i, x) in locations.points.iter().enumerate() {
        let mut rng = stream_rng(seed, SIM_PATH, i as u64);
        let path = sampler.draw(&mut rng);
        let mut v = path;
        for j in 0..n {
            for k in 0..d {
                v[j * d + k] += x[k];
            }
        }
        let retain = (0..n).any(|j| {
            (0..d).all(|k| window.lower[k] <= v[j * d + k] && v[j * d + k] <= window.upper[k])
        });
        if retain {
            points.push(v);
        }
    }
    Ok(PointConfig {
        points,
        times: times.to_vec(),
        window: window.clone(),
        truncation_delta: bias_bound,
    })
}

/// Independent replicates of [`simulate_system`] with per-replicate
/// derived seeds; parallel, order-stable.
pub fn simulate_ensemble(
    measure: &Measure,
    model: &ProcessModel,
    times: &[f64],
    window: &BoxRegion,
    delta: f64,
    seed: u64,
    replicates: usize,
) -> Result<Vec<PointConfig>, SimError> {
    (0..replicates)
        .into_par_iter()
        .map(|r| {
            simulate_system(measure, model, times, window, delta, replicate_seed(seed, r as u64))
        })
        .collect()
}

/// Total counts per bin across replicates for the given time slice.
/// Bins partition the window uniformly, `bins` cells per axis.
pub fn empirical_intensity(configs: &[PointConfig], slice: usize, bins: usize) -> Vec<u64> {
    if configs.is_empty() {
        return vec![0; bins];
    }
    let window = &configs[0].window;
    let d = window.dim();
    let total_bins = bins.pow(d as u32);
    let mut counts = vec![0u64; total_bins];
    for config in configs {
        let n = config.times.len();
        for p in &config.points {
            let mut flat = 0usize;
            let mut inside = true;
            for k in 0..d {
                let x = p[slice * d + k];
                if x < window.lower[k] || x > window.upper[k] {
                    inside = false;
                    break;
                }
                let w = (window.upper[k] - window.lower[k]) / bins as f64;
                let b = (((x - window.lower[k]) / w) as usize).min(bins - 1);
                flat = flat * bins + b;
            }
            debug_assert!(slice < n);
            if inside {
                counts[flat] += 1;
            }
        }
    }
    counts
}

/// Exact two-sample Poisson test per bin (conditional binomial at
/// p = 1/2), combined over bins by Fisher's method. Bins with zero total
/// count drop out, which merges them automatically.
pub fn shift_invariance_test(counts_a: &[u64], counts_b: &[u64]) -> TestResult {
    assert_eq!(counts_a.len(), counts_b.len(), "same binning required");
    let mut p_values = Vec::with_capacity(counts_a.len());
    for (&a, &b) in counts_a.iter().zip(counts_b) {
        let total = a + b;
        if total == 0 {
            continue;
        }
        p_values.push(binomial_half_two_sided(a, total));
    }
    let (statistic, p_value) = fisher_combine(&p_values);
    TestResult {
        statistic,
        p_value,
        method: "conditional-binomial+fisher".into(),
        cells: p_values.len(),
    }
}

/// Simulates the max-stable process `eta(t) = max_i y_i exp(xi_i(t))`
/// with `y_i = 1/Gamma_i` the arrivals of a unit-rate Poisson process.
///
/// Atoms are processed in decreasing `y_i` until
/// `y_next * C_q <= (1 - eps) * min_grid eta`, where `C_q` is the
/// `1 - 1e-4` pilot quantile of `max_grid exp(xi)`; the per-replicate
/// exceedance bound 1e-4 is recorded as `residual_bound`, and replicates
/// that exhaust `max_atoms` are flagged in `stop_stats`.
pub fn simulate_br(
    model: &ProcessModel,
    times: &[f64],
    eps: f64,
    max_atoms: usize,
    replicates: usize,
    seed: u64,
) -> Result<MaxStableSample, SimError> {
    if !(eps > 0.0 && eps < 1.0) || max_atoms < 1 {
        return Err(SimError::BadBrParams);
    }
    let d = model.dim();
    let nd = times.len() * d;
    let sampler = model.path_sampler(times)?;

    // pilot estimate of the (1 - 1e-4) quantile of max exp(xi)
    let pilot_n = 1000usize;
    let mut pilot: Vec<f64> = (0..pilot_n)
        .into_par_iter()
        .map(|j| {
            let mut rng = stream_rng(seed, BR_PILOT, j as u64);
            let path = sampler.draw(&mut rng);
            path.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v)).exp()
        })
        .collect();
    pilot.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let c_q = pilot[((1.0 - 1e-4) * pilot_n as f64).ceil() as usize - 1];

    let rows: Vec<(DVector<f64>, StopStat)> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let rseed = replicate_seed(seed, r as u64);
            let mut arrival_rng = stream_rng(rseed, BR_ARRIVAL, 0);
            let mut eta = DVector::from_element(nd, 0.0f64);
            let mut gamma = 0.0f64;
            let mut atoms_used = 0u32;
            let mut exhausted = true;
            for i in 0..max_atoms {
                let e: f64 = Exp1.sample(&mut arrival_rng);
                gamma += e;
                let y = 1.0 / gamma;
                if i > 0 {
                    let eta_min = eta.iter().fold(f64::INFINITY, |a, &v| a.min(v));
                    if y * c_q <= (1.0 - eps) * eta_min {
                        exhausted = false;
                        break;
                    }
                }
                let mut path_rng = stream_rng(rseed, BR_PATH, i as u64);
                let path = sampler.draw(&mut path_rng);
                for k in 0..nd {
                    eta[k] = eta[k].max(y * path[k].exp());
                }
                atoms_used += 1;
            }
            (eta, StopStat { atoms_used, exhausted })
        })
        .collect();

    let (values, stop_stats) = rows.into_iter().unzip();
    Ok(MaxStableSample {
        values,
        times: times.to_vec(),
        dim: d,
        stop_stats,
        residual_bound: 1e-4,
    })
}

/// Monte Carlo estimate of the fidi CDF
/// `P(eta(t_1) <= z_1, ..., eta(t_n) <= z_n)
///  = exp(-E max_{j,k} exp(xi^k(t_j)) / z_j^k)`,
/// returning the probability and its delta-method standard error.
pub fn fidi_cdf_br(
    model: &ProcessModel,
    times: &[f64],
    z: &[DVector<f64>],
    mc: usize,
    seed: u64,
) -> Result<(f64, f64), SimError> {
    if mc < 1000 {
        return Err(SimError::TooFewSamples);
    }
    let d = model.dim();
    assert_eq!(z.len(), times.len(), "one z vector per time");
    if z.iter().any(|zj| zj.iter().any(|&v| !(v > 0.0))) {
        return Err(SimError::BadThreshold);
    }
    let sampler = model.path_sampler(times)?;
    let vals: Vec<f64> = (0..mc)
        .into_par_iter()
        .map(|j| {
            let mut rng = stream_rng(seed, FIDI, j as u64);
            let path = sampler.draw(&mut rng);
            let mut worst = f64::NEG_INFINITY;
            for (jt, zj) in z.iter().enumerate() {
                for k in 0..d {
                    worst = worst.max(path[jt * d + k].exp() / zj[k]);
                }
            }
            worst
        })
        .collect();
    let mean = vals.iter().sum::<f64>() / mc as f64;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (mc as f64 - 1.0);
    let p = (-mean).exp();
    let se = p * (var / mc as f64).sqrt();
    Ok((p, se))
}

/// Compares the fidi CDF at `times` and `times + s` over a grid of `z`
/// thresholds with common random numbers; the statistic is the largest
/// standardized discrepancy and the p-value is Bonferroni-corrected over
/// the grid cells.
pub fn stationarity_test_br(
    model: &ProcessModel,
    times: &[f64],
    s: f64,
    z_grid: &[Vec<DVector<f64>>],
    mc: usize,
    seed: u64,
) -> Result<TestResult, SimError> {
    let shifted: Vec<f64> = times.iter().map(|t| t + s).collect();
    let mut worst = 0.0f64;
    for (cell, z) in z_grid.iter().enumerate() {
        let cell_seed = seed ^ splitmix64(cell as u64 + 1);
        let (p1, se1) = fidi_cdf_br(model, times, z, mc, cell_seed)?;
        let (p2, se2) = fidi_cdf_br(model, &shifted, z, mc, cell_seed)?;
        let denom = (se1 * se1 + se2 * se2).sqrt();
        if denom > 0.0 {
            worst = worst.max((p1 - p2).abs() / denom);
        } else if p1 != p2 {
            worst = f64::INFINITY;
        }
    }
    let p_value = (z_grid.len() as f64 * 2.0 * normal_cdf(-worst)).min(1.0);
    Ok(TestResult {
        statistic: worst,
        p_value,
        method: "fidi-max-z+bonferroni".into(),
        cells: z_grid.len(),
    })
}

/// CSV rows `replicate,time_index,coord_0,...` for point configurations.
pub fn point_configs_csv(configs: &[PointConfig]) -> String {
    let d = configs.first().map_or(0, |c| c.window.dim());
    let mut out = String::from("replicate,time_index");
    for k in 0..d {
        out.push_str(&format!(",coord_{k}"));
    }
    out.push('\n');
    for (r, config) in configs.iter().enumerate() {
        for p in &config.points {
            for (j, _) in config.times.iter().enumerate() {
                out.push_str(&format!("{r},{j}"));
                for k in 0..d {
                    out.push_str(&format!(",{}", p[j * d + k]));
                }
                out.push('\n');
            }
        }
    }
    out
}

/// CSV rows `replicate,t,comp,value` for max-stable samples.
pub fn max_stable_csv(sample: &MaxStableSample) -> String {
    let mut out = String::from("replicate,t,comp,value\n");
    for r in 0..sample.replicates() {
        for (j, t) in sample.times.iter().enumerate() {
            for k in 0..sample.dim {
                out.push_str(&format!("{r},{t},{k},{}\n", sample.value(r, j, k)));
            }
        }
    }
    out
}
