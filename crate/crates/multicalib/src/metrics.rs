//! Calibration-error estimators over level partitions.
//!
//! For a grouping function `h` and a finite-range predictor with level sets
//! `v`, the plug-in estimators are
//!
//! ```text
//! k2 = sum_v mass_v * (mean over bin v of h * (y - v))^2
//! k1 = sum_v mass_v * |mean over bin v of h * (y - v)|
//! ```
//!
//! Empty bins carry zero mass and contribute nothing. The squared norm `k2`
//! of the constant grouping `h = 1` equals the post-processing gap, the risk
//! improvement available by remapping the predictor's output values; both
//! quantities are computed here and the identity is covered by tests.
//!
//! `mc_error_over_class` searches a linear span of grouping functions for
//! the largest `k2`, rescaling every candidate to a common sup-norm bound.
//! It evaluates each basis direction plus random mixtures, so it is a lower
//! bound on the true supremum over the span.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::discretize::LevelPartition;
use crate::error::{Error, Result};

/// Per-bin contribution to the calibration error.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BinMoment {
    /// Level-set value v.
    pub v: f64,
    /// Empirical mass of the bin.
    pub mass: f64,
    /// Mean of `h * (y - v)` over the bin.
    pub conditional_moment: f64,
}

/// Calibration error of one grouping function over one partition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McReport {
    pub k2: f64,
    pub k1: f64,
    /// Non-empty bins only.
    pub per_bin: Vec<BinMoment>,
    /// Largest observed `h^2`; the sample surrogate for the sup-norm bound.
    pub h_sup_sq: f64,
}

fn check_len(name: &str, len: usize, n: usize) -> Result<()> {
    if len != n {
        return Err(Error::DimensionMismatch(format!("{name} has {len} entries, partition has {n}")));
    }
    Ok(())
}

/// Computes `k2` and `k1` for grouping values `h` against targets `y`.
pub fn mc_error(h: &[f64], y: &[f64], partition: &LevelPartition) -> Result<McReport> {
    let n = partition.n();
    check_len("h", h.len(), n)?;
    check_len("y", y.len(), n)?;

    let bins = partition.n_bins();
    let mut sums = vec![0.0f64; bins];
    for i in 0..n {
        let b = partition.assignment[i];
        sums[b] += h[i] * (y[i] - partition.values[b]);
    }

    let mut k2 = 0.0;
    let mut k1 = 0.0;
    let mut per_bin = Vec::new();
    for (b, &sum) in sums.iter().enumerate() {
        if partition.counts[b] == 0 {
            continue;
        }
        let mass = partition.mass(b);
        let moment = sum / partition.counts[b] as f64;
        k2 += mass * moment * moment;
        k1 += mass * moment.abs();
        per_bin.push(BinMoment { v: partition.values[b], mass, conditional_moment: moment });
    }
    let h_sup_sq = h.iter().map(|&v| v * v).fold(0.0, f64::max);
    Ok(McReport { k2, k1, per_bin, h_sup_sq })
}

/// Risk improvement available by optimally remapping the predictor's output
/// values: `mean (rounded - y)^2` minus the risk of the per-bin mean of `y`.
pub fn post_processing_gap(rounded: &[f64], y: &[f64], partition: &LevelPartition) -> Result<f64> {
    let n = partition.n();
    check_len("rounded", rounded.len(), n)?;
    check_len("y", y.len(), n)?;

    let bins = partition.n_bins();
    let mut sums = vec![0.0f64; bins];
    for i in 0..n {
        sums[partition.assignment[i]] += y[i];
    }
    let means: Vec<f64> = (0..bins)
        .map(|b| if partition.counts[b] > 0 { sums[b] / partition.counts[b] as f64 } else { 0.0 })
        .collect();

    let mut risk_f = 0.0;
    let mut risk_g = 0.0;
    for i in 0..n {
        let b = partition.assignment[i];
        risk_f += (rounded[i] - y[i]) * (rounded[i] - y[i]);
        risk_g += (means[b] - y[i]) * (means[b] - y[i]);
    }
    Ok(((risk_f - risk_g) / n as f64).max(0.0))
}

/// Largest `k2` found over a linear span of grouping functions, with every
/// candidate rescaled so its largest squared value equals `b_sup`.
///
/// Candidates are the `J` basis columns and `n_directions` random Gaussian
/// mixtures (seeded). Candidates that are identically zero on the sample are
/// skipped. The result is a lower bound on the supremum over the span.
pub fn mc_error_over_class(
    basis: &DMatrix<f64>,
    y: &[f64],
    partition: &LevelPartition,
    b_sup: f64,
    n_directions: usize,
    seed: u64,
) -> Result<f64> {
    let n = partition.n();
    check_len("basis", basis.nrows(), n)?;
    check_len("y", y.len(), n)?;
    let j = basis.ncols();
    if j == 0 {
        return Err(Error::Validation("empty grouping basis".into()));
    }
    if n_directions < j {
        return Err(Error::Validation(format!(
            "n_directions ({n_directions}) must be at least the basis size ({j})"
        )));
    }
    if !(b_sup > 0.0 && b_sup.is_finite()) {
        return Err(Error::Validation("sup-norm bound must be positive".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: f64 = 0.0;
    let mut h = vec![0.0f64; n];

    let consider = |h: &[f64], best: &mut f64| -> Result<()> {
        let sup_sq = h.iter().map(|&v| v * v).fold(0.0, f64::max);
        if sup_sq == 0.0 {
            return Ok(());
        }
        let report = mc_error(h, y, partition)?;
        // k2 scales quadratically, so rescaling h to sup h^2 = b_sup
        // multiplies k2 by b_sup / sup_sq.
        *best = best.max(report.k2 * b_sup / sup_sq);
        Ok(())
    };

    for col in 0..j {
        for i in 0..n {
            h[i] = basis[(i, col)];
        }
        consider(&h, &mut best)?;
    }
    for _ in 0..n_directions {
        let lambda: Vec<f64> = (0..j).map(|_| StandardNormal.sample(&mut rng)).collect();
        for i in 0..n {
            h[i] = (0..j).map(|c| basis[(i, c)] * lambda[c]).sum();
        }
        consider(&h, &mut best)?;
    }
    Ok(best)
}

/// Root mean squared error between predictions and targets.
pub fn rmse(predictions: &DVector<f64>, targets: &DVector<f64>) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions vs {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    let n = predictions.len() as f64;
    let mse = predictions
        .iter()
        .zip(targets.iter())
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n;
    Ok(mse.sqrt())
}
