//! Tabular dataset container and CSV I/O.
//!
//! A `Dataset` is a dense feature matrix, a target vector, and optionally a
//! per-row environment label. Environments are remapped to contiguous ids
//! `0..E-1` in order of first appearance, so downstream code can index by
//! label without gaps.
//!
//! CSV files must have a header row and a target column named `y`. Floats are
//! written with Rust's shortest round-trip formatting, so write/read cycles
//! reproduce the numeric content exactly.

use nalgebra::{DMatrix, DVector};
use std::path::Path;

use crate::error::{Error, Result};

/// Name of the target column in CSV files.
pub const TARGET_COLUMN: &str = "y";

/// Immutable sample table: features, targets, optional environment labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: DMatrix<f64>,
    targets: DVector<f64>,
    envs: Option<Vec<usize>>,
    names: Option<Vec<String>>,
}

impl Dataset {
    /// Builds a dataset, validating shapes and finiteness.
    pub fn new(features: DMatrix<f64>, targets: DVector<f64>) -> Result<Self> {
        if features.nrows() == 0 || features.ncols() == 0 {
            return Err(Error::Validation("dataset must have n >= 1 and d >= 1".into()));
        }
        if features.nrows() != targets.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} feature rows vs {} targets",
                features.nrows(),
                targets.len()
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite feature value".into()));
        }
        if targets.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite target".into()));
        }
        Ok(Dataset { features, targets, envs: None, names: None })
    }

    /// Attaches environment labels; they must already be contiguous `0..E-1`.
    pub fn with_envs(mut self, envs: Vec<usize>) -> Result<Self> {
        if envs.len() != self.n() {
            return Err(Error::DimensionMismatch(format!(
                "{} env labels vs {} rows",
                envs.len(),
                self.n()
            )));
        }
        let e = envs.iter().max().map(|m| m + 1).unwrap_or(0);
        let mut seen = vec![false; e];
        for &label in &envs {
            seen[label] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Validation("environment labels are not contiguous".into()));
        }
        self.envs = Some(envs);
        Ok(self)
    }

    /// Attaches feature column names.
    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.d() {
            return Err(Error::DimensionMismatch(format!(
                "{} names vs {} feature columns",
                names.len(),
                self.d()
            )));
        }
        self.names = Some(names);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn d(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn targets(&self) -> &DVector<f64> {
        &self.targets
    }

    pub fn envs(&self) -> Option<&[usize]> {
        self.envs.as_deref()
    }

    /// Number of distinct environments, 0 when unlabeled.
    pub fn n_envs(&self) -> usize {
        self.envs
            .as_ref()
            .and_then(|e| e.iter().max().map(|m| m + 1))
            .unwrap_or(0)
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    /// Feature names, generating `x1..xd` when none were set.
    pub fn names_or_default(&self) -> Vec<String> {
        match &self.names {
            Some(names) => names.clone(),
            None => (1..=self.d()).map(|j| format!("x{j}")).collect(),
        }
    }

    /// Row indices belonging to environment `e`.
    pub fn env_rows(&self, e: usize) -> Vec<usize> {
        match &self.envs {
            Some(envs) => (0..self.n()).filter(|&i| envs[i] == e).collect(),
            None => Vec::new(),
        }
    }

    /// Fraction of rows in environment `e`.
    pub fn env_prior(&self, e: usize) -> f64 {
        self.env_rows(e).len() as f64 / self.n() as f64
    }

    /// Copies the selected rows into a new dataset (env labels dropped).
    pub fn subset(&self, rows: &[usize]) -> Result<Dataset> {
        if rows.is_empty() {
            return Err(Error::Validation("subset selects no rows".into()));
        }
        let d = self.d();
        let mut features = DMatrix::zeros(rows.len(), d);
        let mut targets = DVector::zeros(rows.len());
        for (out, &i) in rows.iter().enumerate() {
            if i >= self.n() {
                return Err(Error::Validation(format!("row index {i} out of range")));
            }
            for j in 0..d {
                features[(out, j)] = self.features[(i, j)];
            }
            targets[out] = self.targets[i];
        }
        let mut ds = Dataset::new(features, targets)?;
        ds.names = self.names.clone();
        Ok(ds)
    }

    /// Min-max rescales targets to [0,1]; returns the new dataset and the
    /// original (lo, hi) so predictions can be mapped back.
    pub fn normalize_targets(&self) -> Result<(Dataset, (f64, f64))> {
        let lo = self.targets.min();
        let hi = self.targets.max();
        if hi - lo < 1e-12 {
            return Err(Error::Validation("target range too small to normalize".into()));
        }
        let scaled = self.targets.map(|v| (v - lo) / (hi - lo));
        let mut ds = Dataset::new(self.features.clone(), scaled)?;
        ds.envs = self.envs.clone();
        ds.names = self.names.clone();
        Ok((ds, (lo, hi)))
    }

    /// Sample variance of the targets (denominator n).
    pub fn target_variance(&self) -> f64 {
        let mean = self.targets.mean();
        self.targets.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / self.n() as f64
    }

    /// Reads a CSV file with a header row. The target column must be named
    /// `y`; `env_column`, if given, is parsed as environment labels in order
    /// of first appearance. All other columns become features.
    pub fn from_csv<P: AsRef<Path>>(path: P, env_column: Option<&str>) -> Result<Dataset> {
        let mut reader = csv::Reader::from_path(path.as_ref())?;
        let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        let y_idx = headers
            .iter()
            .position(|h| h == TARGET_COLUMN)
            .ok_or_else(|| Error::Validation(format!("missing \"{TARGET_COLUMN}\" column")))?;
        let env_idx = match env_column {
            Some(name) => Some(
                headers
                    .iter()
                    .position(|h| h == name)
                    .ok_or_else(|| Error::Validation(format!("missing \"{name}\" column")))?,
            ),
            None => None,
        };

        let feature_cols: Vec<usize> = (0..headers.len())
            .filter(|&j| j != y_idx && Some(j) != env_idx)
            .collect();
        if feature_cols.is_empty() {
            return Err(Error::Validation("no feature columns".into()));
        }
        let names: Vec<String> = feature_cols.iter().map(|&j| headers[j].clone()).collect();

        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut targets: Vec<f64> = Vec::new();
        let mut env_labels: Vec<String> = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record?;
            let parse = |j: usize| -> Result<f64> {
                record
                    .get(j)
                    .ok_or_else(|| Error::Validation(format!("short record at row {}", line + 2)))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| {
                        Error::Validation(format!(
                            "non-numeric cell in column \"{}\" at row {}",
                            headers[j],
                            line + 2
                        ))
                    })
            };
            let y = parse(y_idx)?;
            if !y.is_finite() {
                return Err(Error::Validation("non-finite target".into()));
            }
            let mut row = Vec::with_capacity(feature_cols.len());
            for &j in &feature_cols {
                let v = parse(j)?;
                if !v.is_finite() {
                    return Err(Error::Validation(format!(
                        "non-finite value in column \"{}\" at row {}",
                        headers[j],
                        line + 2
                    )));
                }
                row.push(v);
            }
            if let Some(j) = env_idx {
                env_labels.push(
                    record
                        .get(j)
                        .ok_or_else(|| Error::Validation(format!("short record at row {}", line + 2)))?
                        .trim()
                        .to_string(),
                );
            }
            rows.push(row);
            targets.push(y);
        }
        if rows.is_empty() {
            return Err(Error::Validation("empty file".into()));
        }

        let n = rows.len();
        let d = feature_cols.len();
        let features = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
        let ds = Dataset::new(features, DVector::from_vec(targets))?.with_names(names)?;
        if env_idx.is_some() {
            // First-appearance order gives contiguous ids by construction.
            let mut order: Vec<String> = Vec::new();
            let mut ids = Vec::with_capacity(n);
            for label in &env_labels {
                let id = match order.iter().position(|l| l == label) {
                    Some(id) => id,
                    None => {
                        order.push(label.clone());
                        order.len() - 1
                    }
                };
                ids.push(id);
            }
            ds.with_envs(ids)
        } else {
            Ok(ds)
        }
    }

    /// Writes the dataset as CSV. The environment column, when present, is
    /// named `env` and holds the contiguous integer ids.
    pub fn to_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut writer = csv::Writer::from_path(path.as_ref())?;
        let mut header = self.names_or_default();
        header.push(TARGET_COLUMN.to_string());
        if self.envs.is_some() {
            header.push("env".to_string());
        }
        writer.write_record(&header)?;
        for i in 0..self.n() {
            let mut record: Vec<String> = (0..self.d())
                .map(|j| format!("{}", self.features[(i, j)]))
                .collect();
            record.push(format!("{}", self.targets[i]));
            if let Some(envs) = &self.envs {
                record.push(envs[i].to_string());
            }
            writer.write_record(&record)?;
        }
        writer.flush()?;
        Ok(())
    }
}
