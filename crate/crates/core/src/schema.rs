//! JSON-facing specs for models, measures and grids.
//!
//! These are the serialization schema of the catalog; `build` methods turn
//! them into the runtime types. Model kinds: `bm`, `fbm`, `ou`, `shifted`,
//! `deterministic` (the rank-one `Z * f(t)` process), `stack`, `mix`,
//! `drift`, `stationarize`. Drift and coefficient functions are lists of
//! four coefficients over the basis `{1, t, |t|, t^2}` per component; the
//! covariance-generated mean `-1/2 Sigma(t,t) lambda` is produced by the
//! `stationarize` wrapper, never hand-entered.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gaussian::{BasisCoeffs, ModelError, ProcessModel};
use crate::measures::{GaussianMeasure, Measure, MeasureError};
use crate::stationarity::stationarize_drift;

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("model spec: {0}")]
    Model(#[from] ModelError),
    #[error("measure spec: {0}")]
    Measure(#[from] MeasureError),
    #[error("invalid spec: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelSpec {
    /// Two-sided Brownian motion.
    Bm,
    /// Fractional Brownian motion with the given Hurst index.
    Fbm { hurst: f64 },
    /// Stationary Ornstein-Uhlenbeck process.
    Ou { rate: f64, scale: f64 },
    /// Time-shifted copy of the inner model.
    Shifted { inner: Box<ModelSpec>, shift: f64 },
    /// Rank-one process `Z * f(t)`; one coefficient row per component.
    Deterministic { coeffs: Vec<[f64; 4]> },
    /// Independent stacking.
    Stack { parts: Vec<ModelSpec> },
    /// Linear mixing by a constant matrix.
    Mix { matrix: Vec<Vec<f64>>, inner: Box<ModelSpec> },
    /// Deterministic drift added to the mean.
    Drift { inner: Box<ModelSpec>, coeffs: Vec<[f64; 4]> },
    /// Centred inner model plus the mean `-1/2 Sigma(t,t) lambda`.
    Stationarize { inner: Box<ModelSpec>, lambda: Vec<f64> },
}

impl ModelSpec {
    pub fn build(&self) -> Result<ProcessModel, SchemaError> {
        match self {
            ModelSpec::Bm => Ok(ProcessModel::brownian()),
            ModelSpec::Fbm { hurst } => Ok(ProcessModel::fractional_brownian(*hurst)?),
            ModelSpec::Ou { rate, scale } => {
                Ok(ProcessModel::ornstein_uhlenbeck(*rate, *scale)?)
            }
            ModelSpec::Shifted { inner, shift } => {
                Ok(ProcessModel::shifted(inner.build()?, *shift))
            }
            ModelSpec::Deterministic { coeffs } => {
                let cs = coeffs
                    .iter()
                    .map(|c| BasisCoeffs::from_slice(c))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(ProcessModel::gaussian_coefficient(cs)?)
            }
            ModelSpec::Stack { parts } => {
                let built =
                    parts.iter().map(|p| p.build()).collect::<Result<Vec<_>, _>>()?;
                Ok(ProcessModel::stack(built)?)
            }
            ModelSpec::Mix { matrix, inner } => {
                let rows = matrix.len();
                if rows == 0 || matrix.iter().any(|r| r.len() != matrix[0].len()) {
                    return Err(SchemaError::Invalid("mix matrix must be rectangular".into()));
                }
                let cols = matrix[0].len();
                let flat: Vec<f64> = matrix.iter().flatten().copied().collect();
                let b = DMatrix::from_row_slice(rows, cols, &flat);
                Ok(ProcessModel::mix(b, inner.build()?)?)
            }
            ModelSpec::Drift { inner, coeffs } => {
                let cs = coeffs
                    .iter()
                    .map(|c| BasisCoeffs::from_slice(c))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(ProcessModel::with_drift(inner.build()?, cs)?)
            }
            ModelSpec::Stationarize { inner, lambda } => {
                let centered = inner.build()?;
                Ok(stationarize_drift(&centered, &DVector::from_vec(lambda.clone()))?)
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolyTerm {
    pub alpha: Vec<u32>,
    pub c: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixtureAtom {
    pub lambda: Vec<f64>,
    pub w: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MeasureSpec {
    Exp {
        lambda: Vec<f64>,
        #[serde(default = "default_scale")]
        scale: f64,
    },
    SubspaceExp {
        basis: Vec<Vec<f64>>,
        lambda: Vec<f64>,
        #[serde(default = "default_scale")]
        scale: f64,
    },
    Polyexp {
        lambda: Vec<f64>,
        coeffs: Vec<PolyTerm>,
        #[serde(default)]
        signed: bool,
    },
    Mixture { atoms: Vec<MixtureAtom> },
}

fn default_scale() -> f64 {
    1.0
}

impl MeasureSpec {
    pub fn build(&self) -> Result<Measure, SchemaError> {
        match self {
            MeasureSpec::Exp { lambda, scale } => {
                Ok(Measure::exponential(DVector::from_vec(lambda.clone()), *scale)?)
            }
            MeasureSpec::SubspaceExp { basis, lambda, scale } => {
                let rows = basis.len();
                if rows == 0 || basis.iter().any(|r| r.len() != basis[0].len()) {
                    return Err(SchemaError::Invalid("basis must be rectangular".into()));
                }
                let cols = basis[0].len();
                let flat: Vec<f64> = basis.iter().flatten().copied().collect();
                Ok(Measure::subspace_exponential(
                    DMatrix::from_row_slice(rows, cols, &flat),
                    DVector::from_vec(lambda.clone()),
                    *scale,
                )?)
            }
            MeasureSpec::Polyexp { lambda, coeffs, signed } => {
                let d = lambda.len();
                for term in coeffs {
                    if term.alpha.len() != d {
                        return Err(SchemaError::Invalid(format!(
                            "alpha length {} does not match lambda dimension {d}",
                            term.alpha.len()
                        )));
                    }
                }
                Ok(Measure::poly_exponential(
                    DVector::from_vec(lambda.clone()),
                    coeffs.iter().map(|t| (t.alpha.clone(), t.c)),
                    *signed,
                )?)
            }
            MeasureSpec::Mixture { atoms } => Ok(Measure::mixture(
                atoms
                    .iter()
                    .map(|a| (DVector::from_vec(a.lambda.clone()), a.w))
                    .collect(),
            )?),
        }
    }
}

/// Gaussian measure spec for the convolution oracles.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaussianSpec {
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
}

impl GaussianSpec {
    pub fn build(&self) -> Result<GaussianMeasure, SchemaError> {
        let d = self.mean.len();
        if self.cov.len() != d || self.cov.iter().any(|r| r.len() != d) {
            return Err(SchemaError::Invalid("cov must be d x d".into()));
        }
        let flat: Vec<f64> = self.cov.iter().flatten().copied().collect();
        Ok(GaussianMeasure::new(
            DVector::from_vec(self.mean.clone()),
            DMatrix::from_row_slice(d, d, &flat),
        )?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TimeGrid;
    use crate::stationarity::check_exp_system;

    #[test]
    fn model_specs_round_trip_and_build() {
        let json = r#"{
            "kind": "drift",
            "inner": {
                "kind": "mix",
                "matrix": [[1.0, 1.0], [1.0, -1.0]],
                "inner": {
                    "kind": "stack",
                    "parts": [{"kind": "bm"}, {"kind": "ou", "rate": 1.0, "scale": 1.0}]
                }
            },
            "coeffs": [[0.0, 0.0, -0.5, 0.0], [0.0, 0.0, -0.5, 0.0]]
        }"#;
        let spec: ModelSpec = serde_json::from_str(json).unwrap();
        let model = spec.build().unwrap();
        assert_eq!(model.dim(), 2);
        assert_eq!(model.mean(2.0), DVector::from_vec(vec![-1.0, -1.0]));
        let round = serde_json::to_string(&spec).unwrap();
        let again: ModelSpec = serde_json::from_str(&round).unwrap();
        assert_eq!(again.build().unwrap().mean(2.0), model.mean(2.0));
    }

    #[test]
    fn stationarize_spec_passes_checker() {
        let json = r#"{"kind": "stationarize", "inner": {"kind": "bm"}, "lambda": [1.0]}"#;
        let model: ModelSpec = serde_json::from_str(json).unwrap();
        let model = model.build().unwrap();
        let report = check_exp_system(
            &model,
            &DVector::from_element(1, 1.0),
            &TimeGrid::canonical(),
            1e-9,
        );
        assert!(report.overall);
    }

    #[test]
    fn measure_specs_build() {
        let e: MeasureSpec =
            serde_json::from_str(r#"{"kind": "exp", "lambda": [1.0, 0.0]}"#).unwrap();
        assert_eq!(e.build().unwrap().dim(), 2);

        let s: MeasureSpec = serde_json::from_str(
            r#"{"kind": "subspace-exp", "basis": [[1.0, 0.0]], "lambda": [1.0, 0.0]}"#,
        )
        .unwrap();
        assert!(matches!(s.build().unwrap(), Measure::SubspaceExponential(_)));

        let p: MeasureSpec = serde_json::from_str(
            r#"{"kind": "polyexp", "lambda": [0.0], "coeffs": [{"alpha": [3], "c": 1.0}], "signed": true}"#,
        )
        .unwrap();
        assert!(p.build().unwrap().is_signed());

        let m: MeasureSpec = serde_json::from_str(
            r#"{"kind": "mixture", "atoms": [{"lambda": [1.0, 0.0], "w": 1.0}, {"lambda": [1.5, -0.5], "w": 1.0}]}"#,
        )
        .unwrap();
        assert!(matches!(m.build().unwrap(), Measure::Mixture(_)));
    }

    #[test]
    fn bad_specs_are_rejected() {
        let bad: Result<ModelSpec, _> = serde_json::from_str(r#"{"kind": "nope"}"#);
        assert!(bad.is_err());
        let bad: Result<ModelSpec, _> = serde_json::from_str(r#"{"kind": "fbm"}"#);
        assert!(bad.is_err());
        let fbm: ModelSpec = serde_json::from_str(r#"{"kind": "fbm", "hurst": 2.0}"#).unwrap();
        assert!(fbm.build().is_err());
    }
}
