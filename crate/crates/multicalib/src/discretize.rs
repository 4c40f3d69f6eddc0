//! Discretization of continuous predictions onto an equal-interval grid.
//!
//! `choose_bins` picks the bin count: starting from `min_bins`, it keeps
//! incrementing the count by one as long as at least `coverage_fraction` of
//! the samples land in bins holding at least `min_bin_count` samples, and
//! returns the last count that satisfied the criterion.
//!
//! `round_predictions` snaps every prediction to its bin midpoint and records
//! the induced level partition. Values outside `[lo, hi]` clamp to the end
//! bins; a value exactly on an interior boundary belongs to the higher bin.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Equal-interval grid over a predictor's output range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinSpec {
    /// Number of bins.
    pub m: usize,
    /// Lower edge of the grid.
    pub lo: f64,
    /// Upper edge of the grid.
    pub hi: f64,
    /// True when the input range collapsed to a point and `m` was forced
    /// to 1. A constant predictor is legitimately calibrated, so this is a
    /// signal rather than an error.
    pub degenerate: bool,
}

impl BinSpec {
    /// Bin index for a value; out-of-range values clamp to the end bins and
    /// interior boundaries belong to the higher bin.
    pub fn bin_of(&self, value: f64) -> usize {
        if self.degenerate || self.m == 1 {
            return 0;
        }
        if value < self.lo {
            return 0;
        }
        let width = (self.hi - self.lo) / self.m as f64;
        let idx = ((value - self.lo) / width).floor() as isize;
        idx.clamp(0, self.m as isize - 1) as usize
    }

    /// Midpoint representative of bin `k`.
    pub fn representative(&self, k: usize) -> f64 {
        if self.degenerate {
            return self.lo;
        }
        self.lo + (k as f64 + 0.5) * (self.hi - self.lo) / self.m as f64
    }

    /// All `m` midpoints in bin order.
    pub fn representatives(&self) -> Vec<f64> {
        (0..self.m).map(|k| self.representative(k)).collect()
    }
}

/// Grouping of samples by the level sets of a finite-range predictor.
///
/// `values[k]` is the predictor's output on level set `k`. For grid
/// partitions these are the bin midpoints; for distinct-value partitions
/// they are the observed outputs in ascending order.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelPartition {
    pub values: Vec<f64>,
    pub assignment: Vec<usize>,
    pub counts: Vec<usize>,
}

impl LevelPartition {
    pub fn n(&self) -> usize {
        self.assignment.len()
    }

    pub fn n_bins(&self) -> usize {
        self.values.len()
    }

    /// Empirical mass of bin `k`.
    pub fn mass(&self, k: usize) -> f64 {
        self.counts[k] as f64 / self.n() as f64
    }

    /// Row indices grouped by bin, in row order within each bin.
    pub fn rows_by_bin(&self) -> Vec<Vec<usize>> {
        let mut rows = vec![Vec::new(); self.n_bins()];
        for (i, &b) in self.assignment.iter().enumerate() {
            rows[b].push(i);
        }
        rows
    }
}

/// Fraction of samples that lie in bins holding at least `min_bin_count`
/// samples, for an `m`-bin equal-interval grid.
fn coverage(predictions: &[f64], spec: &BinSpec, min_bin_count: usize) -> f64 {
    let mut counts = vec![0usize; spec.m];
    for &p in predictions {
        counts[spec.bin_of(p)] += 1;
    }
    let covered: usize = counts.iter().filter(|&&c| c >= min_bin_count).sum();
    covered as f64 / predictions.len() as f64
}

/// Picks the bin count for a prediction vector.
///
/// Returns the largest `m >= min_bins` reachable by unit increments such
/// that `coverage_fraction` of the samples sit in bins with at least
/// `min_bin_count` samples. Errors with "insufficient samples" when even
/// `min_bins` fails the criterion. A degenerate (constant) input yields a
/// single-bin spec with the `degenerate` flag set.
pub fn choose_bins(
    predictions: &[f64],
    min_bins: usize,
    min_bin_count: usize,
    coverage_fraction: f64,
) -> Result<BinSpec> {
    if predictions.is_empty() {
        return Err(Error::Validation("no predictions to discretize".into()));
    }
    if predictions.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("non-finite prediction".into()));
    }
    if min_bins == 0 || min_bin_count == 0 {
        return Err(Error::Validation("min_bins and min_bin_count must be positive".into()));
    }
    if !(coverage_fraction > 0.0 && coverage_fraction <= 1.0) {
        return Err(Error::Validation("coverage_fraction must be in (0, 1]".into()));
    }

    let lo = predictions.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = predictions.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo < 1e-12 {
        return Ok(BinSpec { m: 1, lo, hi: lo, degenerate: true });
    }

    let spec_for = |m: usize| BinSpec { m, lo, hi, degenerate: false };
    if coverage(predictions, &spec_for(min_bins), min_bin_count) < coverage_fraction {
        return Err(Error::Validation(format!(
            "insufficient samples: {} bins cannot reach coverage {} with {} samples per bin",
            min_bins, coverage_fraction, min_bin_count
        )));
    }

    // A predictor concentrated on a few spots can satisfy the criterion for
    // every m, so the unit-increment search is capped. The cap is far above
    // the point where an absolutely continuous prediction distribution fails
    // the criterion (roughly n * coverage / min_bin_count bins).
    let cap = (2 * predictions.len() / min_bin_count).max(min_bins);
    let mut best = min_bins;
    let mut m = min_bins + 1;
    while m <= cap && coverage(predictions, &spec_for(m), min_bin_count) >= coverage_fraction {
        best = m;
        m += 1;
    }
    Ok(spec_for(best))
}

/// Replaces each prediction by its bin midpoint and records the partition.
pub fn round_predictions(predictions: &[f64], spec: &BinSpec) -> (Vec<f64>, LevelPartition) {
    let mut assignment = Vec::with_capacity(predictions.len());
    let mut counts = vec![0usize; spec.m];
    let mut rounded = Vec::with_capacity(predictions.len());
    for &p in predictions {
        let b = spec.bin_of(p);
        assignment.push(b);
        counts[b] += 1;
        rounded.push(spec.representative(b));
    }
    let partition = LevelPartition { values: spec.representatives(), assignment, counts };
    (rounded, partition)
}

/// Builds a partition from the exact distinct values of an already
/// finite-range prediction vector (no grid involved). Level-set values are
/// sorted ascending.
pub fn partition_from_values(rounded: &[f64]) -> Result<LevelPartition> {
    if rounded.is_empty() {
        return Err(Error::Validation("no predictions to partition".into()));
    }
    if rounded.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("non-finite prediction".into()));
    }
    let mut values: Vec<f64> = rounded.to_vec();
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    values.dedup();
    let mut assignment = Vec::with_capacity(rounded.len());
    let mut counts = vec![0usize; values.len()];
    for &p in rounded {
        let b = values.partition_point(|&v| v < p);
        debug_assert_eq!(values[b], p);
        assignment.push(b);
        counts[b] += 1;
    }
    Ok(LevelPartition { values, assignment, counts })
}
