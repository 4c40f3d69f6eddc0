//! Predictor representations and the on-disk model format.
//!
//! Two predictor families cover everything the pipeline produces: affine
//! functions of the features, and lookup tables indexed by the bin of a
//! frozen base predictor. The table form is what refitting over "all
//! functions of the bin index" yields; it keeps per-bin constants exactly
//! representable, which the linear family cannot do.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::discretize::BinSpec;
use crate::error::{Error, Result};
use crate::ols::OlsSolution;

/// Affine predictor with an optional output clamp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearPredictor {
    pub coeffs: DVector<f64>,
    pub intercept: f64,
    /// Inclusive output range; predictions outside are clipped.
    pub clamp: Option<(f64, f64)>,
}

impl LinearPredictor {
    pub fn new(coeffs: DVector<f64>, intercept: f64) -> Self {
        LinearPredictor { coeffs, intercept, clamp: None }
    }

    pub fn from_ols(solution: &OlsSolution) -> Self {
        LinearPredictor { coeffs: solution.coeffs.clone(), intercept: solution.intercept, clamp: None }
    }

    pub fn with_clamp(mut self, lo: f64, hi: f64) -> Self {
        self.clamp = Some((lo, hi));
        self
    }

    pub fn d(&self) -> usize {
        self.coeffs.len()
    }

    pub fn predict_row(&self, x_row: &[f64]) -> f64 {
        let mut v = self.intercept;
        for (c, x) in self.coeffs.iter().zip(x_row) {
            v += c * x;
        }
        match self.clamp {
            Some((lo, hi)) => v.clamp(lo, hi),
            None => v,
        }
    }

    /// Predictions for every row of an n x d matrix.
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        if x.ncols() != self.d() {
            return Err(Error::DimensionMismatch(format!(
                "predictor has {} coefficients, matrix has {} columns",
                self.d(),
                x.ncols()
            )));
        }
        let mut out = x * &self.coeffs;
        out.add_scalar_mut(self.intercept);
        if let Some((lo, hi)) = self.clamp {
            out.apply(|v| *v = v.clamp(lo, hi));
        }
        Ok(out)
    }
}

/// Any predictor the pipeline can emit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PredictorKind {
    Linear(LinearPredictor),
    /// Per-bin constants looked up through a frozen base predictor's bins.
    BinTable { f0: LinearPredictor, values: Vec<f64> },
}

/// Predictor plus the bin layout it was trained against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub kind: PredictorKind,
    pub bin_spec: Option<BinSpec>,
}

impl Model {
    pub fn linear(predictor: LinearPredictor) -> Self {
        Model { kind: PredictorKind::Linear(predictor), bin_spec: None }
    }

    pub fn d(&self) -> usize {
        match &self.kind {
            PredictorKind::Linear(p) => p.d(),
            PredictorKind::BinTable { f0, .. } => f0.d(),
        }
    }

    pub fn predict_row(&self, x_row: &[f64]) -> Result<f64> {
        match &self.kind {
            PredictorKind::Linear(p) => Ok(p.predict_row(x_row)),
            PredictorKind::BinTable { f0, values } => {
                let spec = self
                    .bin_spec
                    .as_ref()
                    .ok_or_else(|| Error::Validation("table model without bin layout".into()))?;
                Ok(values[spec.bin_of(f0.predict_row(x_row))])
            }
        }
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        match &self.kind {
            PredictorKind::Linear(p) => p.predict(x),
            PredictorKind::BinTable { f0, values } => {
                let spec = self
                    .bin_spec
                    .as_ref()
                    .ok_or_else(|| Error::Validation("table model without bin layout".into()))?;
                let base = f0.predict(x)?;
                Ok(DVector::from_fn(base.len(), |i, _| values[spec.bin_of(base[i])]))
            }
        }
    }
}

/// Serialized model: a flat JSON object so other tools can read it without
/// knowing the enum layout. Table models carry the extra `table` field.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub coeffs: Vec<f64>,
    pub intercept: f64,
    pub clamp: Option<(f64, f64)>,
    pub bin_spec: Option<BinSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<Vec<f64>>,
}

impl ModelFile {
    pub fn from_model(model: &Model) -> Self {
        match &model.kind {
            PredictorKind::Linear(p) => ModelFile {
                coeffs: p.coeffs.iter().cloned().collect(),
                intercept: p.intercept,
                clamp: p.clamp,
                bin_spec: model.bin_spec.clone(),
                table: None,
            },
            PredictorKind::BinTable { f0, values } => ModelFile {
                coeffs: f0.coeffs.iter().cloned().collect(),
                intercept: f0.intercept,
                clamp: f0.clamp,
                bin_spec: model.bin_spec.clone(),
                table: Some(values.clone()),
            },
        }
    }

    pub fn into_model(self) -> Result<Model> {
        let linear = LinearPredictor {
            coeffs: DVector::from_vec(self.coeffs),
            intercept: self.intercept,
            clamp: self.clamp,
        };
        match self.table {
            None => Ok(Model { kind: PredictorKind::Linear(linear), bin_spec: self.bin_spec }),
            Some(values) => {
                let spec = self
                    .bin_spec
                    .as_ref()
                    .ok_or_else(|| Error::Validation("table model without bin_spec".into()))?;
                if values.len() != spec.m {
                    return Err(Error::Validation(format!(
                        "table has {} entries for {} bins",
                        values.len(),
                        spec.m
                    )));
                }
                Ok(Model {
                    kind: PredictorKind::BinTable { f0: linear, values },
                    bin_spec: self.bin_spec,
                })
            }
        }
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Validation(format!("model serialization: {e}")))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Validation(format!("model parse: {e}")))
    }
}
