//! Scenario schema and runners.
//!
//! A scenario file is a JSON object with a mandatory `name`, `seed` and
//! `expected` annotation plus one command-specific payload (`check`,
//! `oracle`, `simulate` or `br`). See `docs/schema.md` for the full
//! format.

use anyhow::{anyhow, Result};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use psys_core::gaussian::ProcessModel;
use psys_core::grid::TimeGrid;
use psys_core::measures::{BoxRegion, Measure};
use psys_core::schema::{GaussianSpec, MeasureSpec, MixtureAtom, ModelSpec, PolyTerm};
use psys_core::simulate::{max_stable_csv, point_configs_csv, simulate_br, simulate_ensemble};
use psys_core::stationarity::{
    check_brown_resnick, check_exp_system, check_mixture_system, check_polyexp_system,
    check_subspace_system, check_two_lambda_projection, CheckReport, PolyexpOptions,
};
use psys_core::stats::ks_distance_sorted;
use psys_core::transform::{check_deny, check_two_sided, fourier_identity_residual, GridDensity, MeasureKind};

/// Tri-state outcome annotation. `expected-fail` exists for fixtures that
/// are expected to report non-stationarity; they exit 0 when they do.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Expectation {
    Pass,
    Fail,
    ExpectedFail,
}

impl Expectation {
    /// Whether an observed positive verdict matches the annotation.
    pub fn matches(self, verdict: bool) -> bool {
        match self {
            Expectation::Pass => verdict,
            Expectation::Fail | Expectation::ExpectedFail => !verdict,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSpec {
    pub times: Vec<f64>,
    pub shifts: Vec<f64>,
}

impl GridSpec {
    fn build(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.times.clone(), self.shifts.clone()).map_err(|e| anyhow!("{e}"))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CheckSpec {
    Exp { lambda: Vec<f64> },
    Subspace { basis: Vec<Vec<f64>>, lambda: Vec<f64> },
    Br,
    Mixture { atoms: Vec<MixtureAtom> },
    Polyexp {
        lambda: Vec<f64>,
        coeffs: Vec<PolyTerm>,
        #[serde(default)]
        u_draws: Option<usize>,
        #[serde(default)]
        max_tuple_len: Option<usize>,
    },
    TwoLambda { lambda1: Vec<f64>, lambda2: Vec<f64> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DensitySpec {
    /// `sum_i w_i exp(-<lambda_i, x>)`
    ExpMixture { atoms: Vec<MixtureAtom> },
    /// Gaussian density (negative-control fixture).
    Gaussian(GaussianSpec),
    /// Multivariate polynomial.
    Poly { dim: usize, coeffs: Vec<PolyTerm> },
    /// `(w1 x1 + w2 x2)^power`
    Ridge { weights: Vec<f64>, power: u32 },
    Const { c: f64 },
}

impl DensitySpec {
    fn eval(&self, x: &[f64]) -> f64 {
        match self {
            DensitySpec::ExpMixture { atoms } => atoms
                .iter()
                .map(|a| {
                    let dot: f64 = a.lambda.iter().zip(x).map(|(l, v)| l * v).sum();
                    a.w * (-dot).exp()
                })
                .sum(),
            DensitySpec::Gaussian(g) => {
                let d = g.mean.len();
                let gm = g.build().expect("validated at load");
                let diff = DVector::from_iterator(d, x.iter().zip(&g.mean).map(|(a, b)| a - b));
                let chol = nalgebra::linalg::Cholesky::new(gm.cov.clone())
                    .expect("positive definite density");
                let sol = chol.solve(&diff);
                let det = chol.determinant();
                (-0.5 * diff.dot(&sol)).exp()
                    / ((2.0 * std::f64::consts::PI).powi(d as i32) * det).sqrt()
            }
            DensitySpec::Poly { coeffs, .. } => coeffs
                .iter()
                .map(|t| {
                    let mut m = t.c;
                    for (k, &e) in t.alpha.iter().enumerate() {
                        m *= x[k].powi(e as i32);
                    }
                    m
                })
                .sum(),
            DensitySpec::Ridge { weights, power } => {
                let v: f64 = weights.iter().zip(x).map(|(w, y)| w * y).sum();
                v.powi(*power as i32)
            }
            DensitySpec::Const { c } => *c,
        }
    }

    fn dim(&self) -> usize {
        match self {
            DensitySpec::ExpMixture { atoms } => atoms[0].lambda.len(),
            DensitySpec::Gaussian(g) => g.mean.len(),
            DensitySpec::Poly { dim, .. } => *dim,
            DensitySpec::Ridge { weights, .. } => weights.len(),
            DensitySpec::Const { .. } => 1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FourierKindSpec {
    Exp { lambda: Vec<f64> },
    Subspace { basis: Vec<Vec<f64>>, lambda: Vec<f64> },
    Br,
}

impl FourierKindSpec {
    fn build(&self) -> Result<MeasureKind> {
        Ok(match self {
            FourierKindSpec::Exp { lambda } => {
                MeasureKind::Exp(DVector::from_vec(lambda.clone()))
            }
            FourierKindSpec::Subspace { basis, lambda } => {
                let rows = basis.len();
                let cols = basis.first().map_or(0, |r| r.len());
                let flat: Vec<f64> = basis.iter().flatten().copied().collect();
                MeasureKind::Subspace {
                    basis: nalgebra::DMatrix::from_row_slice(rows, cols, &flat),
                    lambda: DVector::from_vec(lambda.clone()),
                }
            }
            FourierKindSpec::Br => MeasureKind::BrownResnick,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OracleSpec {
    Deny {
        density: DensitySpec,
        sigma: GaussianSpec,
        lower: Vec<f64>,
        upper: Vec<f64>,
        step: f64,
        threshold: f64,
    },
    TwoSided {
        density: DensitySpec,
        sigma1: GaussianSpec,
        sigma2: GaussianSpec,
        lower: Vec<f64>,
        upper: Vec<f64>,
        step: f64,
        threshold: f64,
    },
    Fourier {
        model: ModelSpec,
        measure_kind: FourierKindSpec,
        times: Vec<f64>,
        shift: f64,
        #[serde(default = "default_draws")]
        draws: usize,
        threshold: f64,
    },
    /// Combined fixture for the signed density `x^(2k+1)` with two-sided
    /// Brownian motion: runs the derivative criterion and the convolution
    /// oracle; the verdict is "stationary" only if both see no shift
    /// dependence.
    Negpoly {
        k: u32,
        times: Vec<f64>,
        threshold: f64,
    },
}

fn default_draws() -> usize {
    100
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WindowSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulateSpec {
    pub model: ModelSpec,
    pub measure: MeasureSpec,
    pub times: Vec<f64>,
    pub window: WindowSpec,
    #[serde(default = "default_delta")]
    pub delta: f64,
    pub replicates: usize,
    #[serde(default = "default_bins")]
    pub bins: usize,
}

fn default_delta() -> f64 {
    1e-8
}

fn default_bins() -> usize {
    10
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BrSpec {
    pub model: ModelSpec,
    pub times: Vec<f64>,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_max_atoms")]
    pub max_atoms: usize,
    pub replicates: usize,
    /// KS threshold for the unit Frechet margin summary.
    #[serde(default = "default_ks")]
    pub ks_threshold: f64,
}

fn default_eps() -> f64 {
    0.01
}

fn default_max_atoms() -> usize {
    100_000
}

fn default_ks() -> f64 {
    0.02
}

/// A scenario file: identification plus exactly one command payload.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub expected: Expectation,
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub model: Option<ModelSpec>,
    #[serde(default)]
    pub check: Option<CheckSpec>,
    #[serde(default)]
    pub oracle: Option<OracleSpec>,
    #[serde(default)]
    pub simulate: Option<SimulateSpec>,
    #[serde(default)]
    pub br: Option<BrSpec>,
}

impl Scenario {
    pub fn grid(&self) -> Result<TimeGrid> {
        match &self.grid {
            Some(g) => g.build(),
            None => Ok(TimeGrid::canonical()),
        }
    }

    pub fn tol(&self) -> f64 {
        self.tol.unwrap_or(1e-9)
    }
}

/// FNV-1a hash of the scenario bytes; stable across runs and platforms.
pub fn scenario_hash(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Result of a check-style run: the structured report and the verdict.
pub struct CheckOutcome {
    pub report: CheckReport,
    pub verdict: bool,
}

pub fn run_check(scenario: &Scenario) -> Result<CheckOutcome> {
    let grid = scenario.grid()?;
    let tol = scenario.tol();
    let model = scenario
        .model
        .as_ref()
        .ok_or_else(|| anyhow!("check scenario needs a model"))?
        .build()?;
    let spec = scenario
        .check
        .as_ref()
        .ok_or_else(|| anyhow!("scenario has no check payload"))?;
    let report = match spec {
        CheckSpec::Exp { lambda } => {
            check_exp_system(&model, &DVector::from_vec(lambda.clone()), &grid, tol)
        }
        CheckSpec::Subspace { basis, lambda } => {
            let rows = basis.len();
            let cols = basis.first().map_or(0, |r| r.len());
            let flat: Vec<f64> = basis.iter().flatten().copied().collect();
            check_subspace_system(
                &model,
                &nalgebra::DMatrix::from_row_slice(rows, cols, &flat),
                &DVector::from_vec(lambda.clone()),
                &grid,
                tol,
            )?
        }
        CheckSpec::Br => check_brown_resnick(&model, &grid, tol),
        CheckSpec::Mixture { atoms } => {
            let measure = MeasureSpec::Mixture { atoms: atoms.clone() }.build()?;
            let Measure::Mixture(mix) = measure else { unreachable!() };
            check_mixture_system(&model, &mix, &grid, tol)
        }
        CheckSpec::Polyexp { lambda, coeffs, u_draws, max_tuple_len } => {
            let measure = MeasureSpec::Polyexp {
                lambda: lambda.clone(),
                coeffs: coeffs.clone(),
                signed: true,
            }
            .build()?;
            let Measure::PolyExponential(pe) = measure else { unreachable!() };
            let opts = PolyexpOptions {
                u_draws: u_draws.unwrap_or(32),
                max_tuple_len: max_tuple_len.unwrap_or(3),
                seed: scenario.seed,
            };
            check_polyexp_system(&model, &pe, &grid, tol, &opts)
        }
        CheckSpec::TwoLambda { lambda1, lambda2 } => check_two_lambda_projection(
            &model,
            &DVector::from_vec(lambda1.clone()),
            &DVector::from_vec(lambda2.clone()),
            &grid,
            tol,
        )?,
    };
    let verdict = report.overall;
    Ok(CheckOutcome { report, verdict })
}

/// Result of an oracle run: residuals by name and the verdict.
#[derive(Debug, Serialize)]
pub struct OracleOutcome {
    pub residuals: Vec<(String, f64)>,
    pub threshold: f64,
    pub verdict: bool,
}

/// Tabulates a density on the requested box padded by the kernel extent so
/// the valid interior covers the box itself.
fn tabulate_padded(
    density: &DensitySpec,
    lower: &[f64],
    upper: &[f64],
    step: f64,
    sigmas: &[&psys_core::measures::GaussianMeasure],
) -> Result<GridDensity> {
    let d = lower.len();
    if density.dim() != d {
        return Err(anyhow!("density dimension {} vs box {}", density.dim(), d));
    }
    let mut pad = vec![0.0f64; d];
    for sigma in sigmas {
        for k in 0..d {
            let extent = sigma.mean[k].abs() + 8.0 * sigma.cov[(k, k)].max(0.0).sqrt();
            pad[k] = pad[k].max((extent / step).ceil() * step + step);
        }
    }
    let lo: Vec<f64> = lower.iter().zip(&pad).map(|(l, p)| l - p).collect();
    let hi: Vec<f64> = upper.iter().zip(&pad).map(|(u, p)| u + p).collect();
    GridDensity::tabulate(&lo, &hi, step, |x| density.eval(x)).map_err(|e| anyhow!("{e}"))
}

pub fn run_oracle(scenario: &Scenario) -> Result<OracleOutcome> {
    let spec = scenario
        .oracle
        .as_ref()
        .ok_or_else(|| anyhow!("scenario has no oracle payload"))?;
    match spec {
        OracleSpec::Deny { density, sigma, lower, upper, step, threshold } => {
            let s = sigma.build()?;
            let f = tabulate_padded(density, lower, upper, *step, &[&s])?;
            let r = check_deny(&f, &s)?;
            Ok(OracleOutcome {
                residuals: vec![("deny".into(), r)],
                threshold: *threshold,
                verdict: r < *threshold,
            })
        }
        OracleSpec::TwoSided { density, sigma1, sigma2, lower, upper, step, threshold } => {
            let s1 = sigma1.build()?;
            let s2 = sigma2.build()?;
            let f = tabulate_padded(density, lower, upper, *step, &[&s1, &s2])?;
            let r = check_two_sided(&f, &s1, &s2)?;
            Ok(OracleOutcome {
                residuals: vec![("two-sided".into(), r)],
                threshold: *threshold,
                verdict: r < *threshold,
            })
        }
        OracleSpec::Fourier { model, measure_kind, times, shift, draws, threshold } => {
            let model = model.build()?;
            let kind = measure_kind.build()?;
            let r = fourier_identity_residual(&model, &kind, times, *shift, *draws, scenario.seed);
            Ok(OracleOutcome {
                residuals: vec![("fourier".into(), r)],
                threshold: *threshold,
                verdict: r < *threshold,
            })
        }
        OracleSpec::Negpoly { k, times, threshold } => {
            if times.len() != 2 {
                return Err(anyhow!("negpoly oracle needs exactly two times"));
            }
            let bm = ProcessModel::brownian();
            let degree = 2 * k + 1;
            let measure = MeasureSpec::Polyexp {
                lambda: vec![0.0],
                coeffs: vec![PolyTerm { alpha: vec![degree], c: 1.0 }],
                signed: true,
            }
            .build()?;
            let Measure::PolyExponential(pe) = measure else { unreachable!() };
            let grid = scenario.grid()?;
            let opts = PolyexpOptions {
                u_draws: 16,
                max_tuple_len: 1,
                seed: scenario.seed,
            };
            let report = check_polyexp_system(&bm, &pe, &grid, scenario.tol(), &opts);
            let worst = report
                .conditions
                .iter()
                .map(|c| c.max_residual)
                .fold(0.0f64, f64::max);

            // convolution route: f * N(0, |t1|) vs f * N(0, |t2|)
            let density = DensitySpec::Poly {
                dim: 1,
                coeffs: vec![PolyTerm { alpha: vec![degree], c: 1.0 }],
            };
            let sig = |t: f64| {
                psys_core::measures::GaussianMeasure::new(
                    DVector::zeros(1),
                    nalgebra::DMatrix::from_element(1, 1, t.abs()),
                )
                .expect("valid")
            };
            let s1 = sig(times[0]);
            let s2 = sig(times[1]);
            let f = tabulate_padded(&density, &[-10.0], &[10.0], 0.01, &[&s1, &s2])?;
            let conv_residual = check_two_sided(&f, &s1, &s2)?;

            let stationary = report.overall && conv_residual < *threshold;
            Ok(OracleOutcome {
                residuals: vec![
                    ("polyexp-derivative".into(), worst),
                    ("conv-two-sided".into(), conv_residual),
                ],
                threshold: *threshold,
                verdict: stationary,
            })
        }
    }
}

#[derive(Debug, Serialize)]
pub struct SimulateOutcome {
    pub csv: String,
    pub mean_points_per_replicate: f64,
    pub truncation_delta: f64,
    pub bin_counts: Vec<Vec<u64>>,
    pub verdict: bool,
}

pub fn run_simulate(scenario: &Scenario, seed: u64) -> Result<SimulateOutcome> {
    let spec = scenario
        .simulate
        .as_ref()
        .ok_or_else(|| anyhow!("scenario has no simulate payload"))?;
    if spec.replicates == 0 {
        return Err(anyhow!("replicates must be positive"));
    }
    let model = spec.model.build()?;
    let measure = spec.measure.build()?;
    let window = BoxRegion::new(spec.window.lower.clone(), spec.window.upper.clone())
        .map_err(|e| anyhow!("{e}"))?;
    let configs = simulate_ensemble(
        &measure,
        &model,
        &spec.times,
        &window,
        spec.delta,
        seed,
        spec.replicates,
    )?;
    let csv = point_configs_csv(&configs);
    let mean = configs.iter().map(|c| c.points.len() as f64).sum::<f64>()
        / configs.len() as f64;
    let bin_counts: Vec<Vec<u64>> = (0..spec.times.len())
        .map(|slice| psys_core::simulate::empirical_intensity(&configs, slice, spec.bins))
        .collect();
    Ok(SimulateOutcome {
        csv,
        mean_points_per_replicate: mean,
        truncation_delta: configs.first().map_or(0.0, |c| c.truncation_delta),
        bin_counts,
        verdict: true,
    })
}

#[derive(Debug, Serialize)]
pub struct BrOutcome {
    pub csv: String,
    pub ks_by_margin: Vec<f64>,
    pub atoms_mean: f64,
    pub exhausted_replicates: usize,
    pub residual_bound: f64,
    pub verdict: bool,
}

pub fn run_br(scenario: &Scenario, seed: u64) -> Result<BrOutcome> {
    let spec = scenario
        .br
        .as_ref()
        .ok_or_else(|| anyhow!("scenario has no br payload"))?;
    if spec.replicates == 0 {
        return Err(anyhow!("replicates must be positive"));
    }
    let model = spec.model.build()?;
    let sample = simulate_br(
        &model,
        &spec.times,
        spec.eps,
        spec.max_atoms,
        spec.replicates,
        seed,
    )?;
    let csv = max_stable_csv(&sample);
    let mut ks_by_margin = Vec::new();
    for j in 0..spec.times.len() {
        for k in 0..model.dim() {
            let mut xs: Vec<f64> =
                (0..sample.replicates()).map(|r| sample.value(r, j, k)).collect();
            xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            ks_by_margin.push(ks_distance_sorted(&xs, |z| (-1.0 / z).exp()));
        }
    }
    let atoms_mean = sample
        .stop_stats
        .iter()
        .map(|s| s.atoms_used as f64)
        .sum::<f64>()
        / sample.replicates() as f64;
    let exhausted = sample.stop_stats.iter().filter(|s| s.exhausted).count();
    let verdict = ks_by_margin.iter().all(|&ks| ks < spec.ks_threshold) && exhausted == 0;
    Ok(BrOutcome {
        csv,
        ks_by_margin,
        atoms_mean,
        exhausted_replicates: exhausted,
        residual_bound: sample.residual_bound,
        verdict,
    })
}
