//! The iterative pseudolabel driver and its stopping certificate.
//!
//! One iteration: round the current predictor onto the frozen grid, fit the
//! grouping basis to y on every level set, evaluate the per-bin fits as
//! pseudolabels, and refit the predictor on them. The run maintains
//! `gap_t = err_{t-1} - err_tilde_t`, the risk improvement the pseudolabels
//! found over the rounded predictor, and stops when that improvement dries
//! up. The returned predictor is the rounded iterate from the body that
//! computed the final gap, matching the convention that the output precedes
//! the stopping test.
//!
//! Implementation choices:
//! - the bin grid is chosen once from the initial predictor and reused, so
//!   risk numbers are comparable across iterations; later out-of-range
//!   outputs clamp to the end bins;
//! - with the `BinTable` refit class, iterates beyond the first take
//!   finitely many values already, so they are partitioned by exact value
//!   instead of re-rounded (re-rounding would shift table entries to grid
//!   midpoints and destroy the exact-calibration property of per-bin
//!   means);
//! - the driver is RNG-free: two runs on the same inputs produce
//!   bit-identical traces.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::config::{RefitClass, RunConfig};
use crate::dataset::Dataset;
use crate::discretize::{choose_bins, partition_from_values, round_predictions, BinSpec, LevelPartition};
use crate::error::{Error, Result};
use crate::grouping::{eval_pseudolabels, fit_on_levelsets, GroupingBasis};
use crate::ols::ols_fit;
use crate::predictor::{LinearPredictor, Model, PredictorKind};

/// Why the run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// The gap itself fell to the stopping threshold.
    GapConverged,
    /// The gap stopped decreasing between consecutive iterations.
    GapNonimproving,
    MaxIters,
    /// The initial predictor's outputs collapsed to a point; nothing to do.
    Degenerate,
}

/// Sup-norm bound and calibration certificate at the stopping point.
///
/// For every grouping function in the basis span rescaled to a squared
/// sample sup of `b`, the squared calibration error is at most `alpha`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub b: f64,
    pub alpha: f64,
}

/// One row of the run history, indexed like the iteration it describes:
/// `err` is the rounded iterate's risk, `err_tilde` the risk of the
/// pseudolabels that iterate was refit on (absent at t = 0), and
/// `gap = err_{t-1} - err_tilde_t`. The final record carries only
/// `err_tilde`/`gap`: it is the stopping test's view past the last refit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub t: usize,
    pub err: Option<f64>,
    pub err_tilde: Option<f64>,
    pub gap: Option<f64>,
    pub n_bins: usize,
    /// Per-bin coefficients fit on this iterate's level sets; inner `None`
    /// marks an empty bin's identity sentinel.
    pub lambdas: Vec<Option<Vec<f64>>>,
    /// The iterate's parameters: linear coefficients, or table values for
    /// the bin-table refit class.
    pub coeffs: Vec<f64>,
    /// Present for linear iterates only.
    pub intercept: Option<f64>,
}

/// Full history of one driver run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub iterations: Vec<IterationRecord>,
    pub stop_reason: StopReason,
    /// Frozen grid; `None` when the run used exact-value partitions.
    pub bin_spec: Option<BinSpec>,
    pub stop_epsilon_used: f64,
    pub config: RunConfig,
    pub certificate: Option<Certificate>,
}

impl RunTrace {
    /// The gap the stopping test acted on.
    pub fn final_gap(&self) -> Option<f64> {
        self.iterations.last().and_then(|r| r.gap)
    }

    /// Writes one CSV row per record: t, err, err_tilde, gap, coef_norm.
    pub fn write_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut w = csv::Writer::from_path(path.as_ref())?;
        w.write_record(["t", "err", "err_tilde", "gap", "coef_norm"])?;
        let fmt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
        for rec in &self.iterations {
            let norm = rec.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt();
            let norm_str =
                if rec.coeffs.is_empty() { String::new() } else { format!("{norm}") };
            w.write_record([
                rec.t.to_string(),
                fmt(rec.err),
                fmt(rec.err_tilde),
                fmt(rec.gap),
                norm_str,
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_json<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Validation(format!("trace serialization: {e}")))?;
        std::fs::write(path, json)?;
        Ok(())
    }
}

fn mse(a: &[f64], y: &DVector<f64>) -> f64 {
    let n = a.len() as f64;
    a.iter().zip(y.iter()).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n
}

fn snapshot(kind: &IterateKind) -> (Vec<f64>, Option<f64>) {
    match kind {
        IterateKind::Linear(p) => (p.coeffs.iter().cloned().collect(), Some(p.intercept)),
        IterateKind::Table(values) => (values.clone(), None),
    }
}

enum IterateKind {
    Linear(LinearPredictor),
    Table(Vec<f64>),
}

/// Sup-norm bound and certificate from a finished trace: `b` is the largest
/// squared basis value on the sample and `alpha = b * final_gap`.
pub fn certify(trace: &RunTrace, basis_matrix: &DMatrix<f64>) -> Result<Certificate> {
    let gap = trace
        .final_gap()
        .ok_or_else(|| Error::Validation("trace has no completed iteration".into()))?;
    let b = basis_matrix.iter().map(|v| v * v).fold(0.0, f64::max);
    if b == 0.0 {
        return Err(Error::Validation("basis is identically zero".into()));
    }
    Ok(Certificate { b, alpha: b * gap })
}

/// Runs the full iteration until a stopping rule fires.
///
/// Returns the final predictor (the rounded iterate preceding the stopping
/// test) and the complete trace. The basis is evaluated once on `data`;
/// every level-set fit and refit uses `cfg.ridge_lambda`.
pub fn run(
    data: &Dataset,
    basis: &GroupingBasis,
    f0: &LinearPredictor,
    cfg: &RunConfig,
) -> Result<(Model, RunTrace)> {
    cfg.validate()?;
    if cfg.refit == RefitClass::BinTable && !cfg.discretize {
        return Err(Error::Validation(
            "bin_table refit requires discretization (the table is indexed by grid bin)".into(),
        ));
    }
    let y = data.targets();
    let basis_matrix = basis.evaluate(data)?;
    let stop_epsilon = cfg.resolve_stop_epsilon(data.target_variance());

    let p0 = f0.predict(data.features())?;
    let p0_slice: Vec<f64> = p0.iter().cloned().collect();

    let bin_spec = if cfg.discretize {
        Some(choose_bins(&p0_slice, cfg.min_bins, cfg.min_bin_count, cfg.coverage_fraction)?)
    } else {
        None
    };

    // Constant initial predictor: already calibrated by construction.
    if let Some(spec) = &bin_spec {
        if spec.degenerate {
            let (rounded, _) = round_predictions(&p0_slice, spec);
            let record = IterationRecord {
                t: 0,
                err: Some(mse(&rounded, y)),
                err_tilde: None,
                gap: None,
                n_bins: 1,
                lambdas: Vec::new(),
                coeffs: f0.coeffs.iter().cloned().collect(),
                intercept: Some(f0.intercept),
            };
            let trace = RunTrace {
                iterations: vec![record],
                stop_reason: StopReason::Degenerate,
                bin_spec: bin_spec.clone(),
                stop_epsilon_used: stop_epsilon,
                config: cfg.clone(),
                certificate: None,
            };
            let model = Model { kind: PredictorKind::Linear(f0.clone()), bin_spec };
            return Ok((model, trace));
        }
    }

    // The table refit class needs the frozen assignment of every row to its
    // initial-predictor bin.
    let f0_assignment: Option<Vec<usize>> = bin_spec.as_ref().map(|spec| {
        p0_slice.iter().map(|&p| spec.bin_of(p)).collect()
    });

    let y_slice: Vec<f64> = y.iter().cloned().collect();
    let mut iterate = IterateKind::Linear(f0.clone());
    let mut predictions = p0_slice;
    let mut records: Vec<IterationRecord> = Vec::new();
    // Pseudolabel risk and gap computed by the previous body; they belong
    // to the current body's record under the index convention.
    let mut carried: Option<(f64, f64)> = None;

    for t in 0..cfg.max_iters {
        // Round the iterate and partition by level set. Table iterates are
        // finite-range already and keep their exact values.
        let (rounded, partition): (Vec<f64>, LevelPartition) = match (&bin_spec, &iterate) {
            (Some(spec), IterateKind::Linear(_)) => round_predictions(&predictions, spec),
            _ => {
                let part = partition_from_values(&predictions)?;
                (predictions.clone(), part)
            }
        };
        let err = mse(&rounded, y);

        let fitted = fit_on_levelsets(&basis_matrix, &y_slice, &partition, cfg.ridge_lambda)?;
        let pseudolabels = eval_pseudolabels(&fitted, &basis_matrix, &partition)?;
        let err_tilde = mse(&pseudolabels, y);
        let gap = err - err_tilde;

        let (coeffs, intercept) = snapshot(&iterate);
        records.push(IterationRecord {
            t,
            err: Some(err),
            err_tilde: carried.map(|(e, _)| e),
            gap: carried.map(|(_, g)| g),
            n_bins: partition.n_bins(),
            lambdas: fitted
                .lambdas
                .iter()
                .map(|l| l.as_ref().map(|v| v.iter().cloned().collect()))
                .collect(),
            coeffs,
            intercept,
        });

        let prev_gap = carried.map(|(_, g)| g);
        let stop = if gap <= stop_epsilon {
            Some(StopReason::GapConverged)
        } else if !cfg.strict_stopping && prev_gap.is_some_and(|g| gap >= g - stop_epsilon) {
            Some(StopReason::GapNonimproving)
        } else if t + 1 == cfg.max_iters {
            Some(StopReason::MaxIters)
        } else {
            None
        };

        if let Some(reason) = stop {
            records.push(IterationRecord {
                t: t + 1,
                err: None,
                err_tilde: Some(err_tilde),
                gap: Some(gap),
                n_bins: partition.n_bins(),
                lambdas: Vec::new(),
                coeffs: Vec::new(),
                intercept: None,
            });
            let model = final_model(&iterate, f0, &bin_spec);
            let certificate = certify_inline(gap, &basis_matrix);
            let trace = RunTrace {
                iterations: records,
                stop_reason: reason,
                bin_spec,
                stop_epsilon_used: stop_epsilon,
                config: cfg.clone(),
                certificate: Some(certificate),
            };
            return Ok((model, trace));
        }
        carried = Some((err_tilde, gap));

        match cfg.refit {
            RefitClass::Linear => {
                let targets = DVector::from_vec(pseudolabels);
                let sol = ols_fit(data.features(), &targets, cfg.ridge_lambda)?;
                let next = LinearPredictor::from_ols(&sol);
                predictions = next.predict(data.features())?.iter().cloned().collect();
                iterate = IterateKind::Linear(next);
            }
            RefitClass::BinTable => {
                let spec = bin_spec.as_ref().expect("checked above");
                let assignment = f0_assignment.as_ref().expect("grid mode");
                let mut sums = vec![0.0f64; spec.m];
                let mut counts = vec![0usize; spec.m];
                for (i, &b) in assignment.iter().enumerate() {
                    sums[b] += pseudolabels[i];
                    counts[b] += 1;
                }
                let values: Vec<f64> = (0..spec.m)
                    .map(|b| {
                        if counts[b] > 0 {
                            sums[b] / counts[b] as f64
                        } else {
                            spec.representative(b)
                        }
                    })
                    .collect();
                predictions = assignment.iter().map(|&b| values[b]).collect();
                iterate = IterateKind::Table(values);
            }
        }
    }
    unreachable!("loop always returns through a stopping rule");
}

fn certify_inline(final_gap: f64, basis_matrix: &DMatrix<f64>) -> Certificate {
    let b = basis_matrix.iter().map(|v| v * v).fold(0.0, f64::max);
    Certificate { b, alpha: b * final_gap }
}

fn final_model(
    iterate: &IterateKind,
    f0: &LinearPredictor,
    bin_spec: &Option<BinSpec>,
) -> Model {
    match iterate {
        IterateKind::Linear(p) => {
            Model { kind: PredictorKind::Linear(p.clone()), bin_spec: bin_spec.clone() }
        }
        IterateKind::Table(values) => Model {
            kind: PredictorKind::BinTable { f0: f0.clone(), values: values.clone() },
            bin_spec: bin_spec.clone(),
        },
    }
}
