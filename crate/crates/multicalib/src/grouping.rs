//! Grouping-function bases and level-set regression.
//!
//! A grouping basis is a small set of functions of (x, y) whose linear span
//! is the class the calibration guarantee quantifies over. Three spans are
//! built here:
//!
//! - `Environment`: the posterior probabilities p(e|x,y) of a trained
//!   environment classifier, one column per environment. Rows sum to 1, so
//!   the constant function is already in the span and no extra column is
//!   appended by default.
//! - `HardSample`: the squared residual of a fixed identification model
//!   plus an explicit constant column, the continuous version of hard-
//!   sample upweighting.
//! - `RawLinear`: residuals of each non-causal coordinate regressed on the
//!   causal block and the label. This is the largest span of linear
//!   functions of (x, y) that avoids the label-reconstruction degeneracy
//!   (the full linear span contains h(x,y) = y itself, which would let the
//!   level-set fit reproduce y and stall the whole procedure). A constant
//!   column is appended.
//!
//! `fit_on_levelsets` runs an independent least-squares fit of y on the
//! basis columns inside every level set; `eval_pseudolabels` evaluates the
//! fitted per-bin functions row by row. Bins receive minimum-norm solutions
//! when underdetermined, and empty bins carry an identity sentinel whose
//! pseudolabel is the bin value itself.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::discretize::LevelPartition;
use crate::error::{Error, Result};
use crate::logistic::EnvClassifier;
use crate::ols::{ols_fit, svd_ridge_solve};
use crate::predictor::LinearPredictor;

/// Span construction for one of the supported grouping families.
#[derive(Debug, Clone)]
pub enum BasisKind {
    /// The constant function only: level-set fits reduce to per-bin means,
    /// i.e. plain recalibration.
    Constant,
    /// Posterior columns of a trained environment classifier.
    Environment { classifier: EnvClassifier },
    /// Squared residual of a fixed model, plus a constant column.
    HardSample { f_id: LinearPredictor },
    /// Residual evaluators psi_j - beta_phi[:,j]' phi - beta_y[j] y -
    /// intercept[j], one per non-causal coordinate, plus a constant column.
    /// Feature columns 0..d_phi are the causal block, the rest are psi.
    RawLinear {
        d_phi: usize,
        beta_phi: DMatrix<f64>,
        beta_y: DVector<f64>,
        intercepts: DVector<f64>,
    },
}

/// A grouping-function basis: family plus the constant-column switch.
#[derive(Debug, Clone)]
pub struct GroupingBasis {
    pub kind: BasisKind,
    /// Appends an all-ones column on evaluation. Defaults to false for
    /// every constructor here: the environment span contains constants
    /// implicitly and the other two carry explicit constant columns.
    pub include_constant: bool,
}

impl GroupingBasis {
    pub fn constant() -> Self {
        GroupingBasis { kind: BasisKind::Constant, include_constant: false }
    }

    pub fn environment(classifier: EnvClassifier) -> Self {
        GroupingBasis { kind: BasisKind::Environment { classifier }, include_constant: false }
    }

    pub fn hard_sample(f_id: LinearPredictor) -> Self {
        GroupingBasis { kind: BasisKind::HardSample { f_id }, include_constant: false }
    }

    /// Residual-evaluator basis from known regression coefficients of the
    /// non-causal block on (causal block, y).
    pub fn raw_linear(
        d_phi: usize,
        beta_phi: DMatrix<f64>,
        beta_y: DVector<f64>,
        intercepts: DVector<f64>,
    ) -> Result<Self> {
        let d_psi = beta_y.len();
        if beta_phi.nrows() != d_phi || beta_phi.ncols() != d_psi || intercepts.len() != d_psi {
            return Err(Error::DimensionMismatch(format!(
                "raw_linear blocks disagree: beta_phi {}x{}, beta_y {}, intercepts {}",
                beta_phi.nrows(),
                beta_phi.ncols(),
                beta_y.len(),
                intercepts.len()
            )));
        }
        if d_psi == 0 {
            return Err(Error::Validation("raw_linear needs at least one psi column".into()));
        }
        Ok(GroupingBasis {
            kind: BasisKind::RawLinear { d_phi, beta_phi, beta_y, intercepts },
            include_constant: false,
        })
    }

    /// Residual-evaluator basis with the regression coefficients estimated
    /// from the sample: each psi_j is regressed on (phi, y) by least
    /// squares, intercept included.
    pub fn raw_linear_from_sample(data: &Dataset, d_phi: usize) -> Result<Self> {
        let d = data.d();
        if d_phi == 0 || d_phi >= d {
            return Err(Error::Validation(format!(
                "d_phi must be in 1..{} for {} feature columns",
                d - 1,
                d
            )));
        }
        let d_psi = d - d_phi;
        let n = data.n();
        let mut design = DMatrix::zeros(n, d_phi + 1);
        for i in 0..n {
            for j in 0..d_phi {
                design[(i, j)] = data.features()[(i, j)];
            }
            design[(i, d_phi)] = data.targets()[i];
        }
        let mut beta_phi = DMatrix::zeros(d_phi, d_psi);
        let mut beta_y = DVector::zeros(d_psi);
        let mut intercepts = DVector::zeros(d_psi);
        for j in 0..d_psi {
            let psi_j = DVector::from_fn(n, |i, _| data.features()[(i, d_phi + j)]);
            let sol = ols_fit(&design, &psi_j, 0.0)?;
            for k in 0..d_phi {
                beta_phi[(k, j)] = sol.coeffs[k];
            }
            beta_y[j] = sol.coeffs[d_phi];
            intercepts[j] = sol.intercept;
        }
        GroupingBasis::raw_linear(d_phi, beta_phi, beta_y, intercepts)
    }

    /// Number of columns the basis produces on evaluation.
    pub fn n_columns(&self) -> usize {
        let base = match &self.kind {
            BasisKind::Constant => 1,
            BasisKind::Environment { classifier } => classifier.n_classes,
            BasisKind::HardSample { .. } => 2,
            BasisKind::RawLinear { beta_y, .. } => beta_y.len() + 1,
        };
        base + usize::from(self.include_constant)
    }

    /// Evaluates the basis on every row of `data`, yielding an n x J matrix.
    pub fn evaluate(&self, data: &Dataset) -> Result<DMatrix<f64>> {
        let mut matrix = match &self.kind {
            BasisKind::Constant => DMatrix::from_element(data.n(), 1, 1.0),
            BasisKind::Environment { classifier } => build_env_basis(classifier, data)?,
            BasisKind::HardSample { f_id } => build_jtt_basis(f_id, data)?,
            BasisKind::RawLinear { d_phi, beta_phi, beta_y, intercepts } => {
                let d_phi = *d_phi;
                let d_psi = beta_y.len();
                if data.d() != d_phi + d_psi {
                    return Err(Error::DimensionMismatch(format!(
                        "raw_linear expects {} feature columns, dataset has {}",
                        d_phi + d_psi,
                        data.d()
                    )));
                }
                let n = data.n();
                let mut out = DMatrix::zeros(n, d_psi + 1);
                for i in 0..n {
                    let y = data.targets()[i];
                    for j in 0..d_psi {
                        let mut v = data.features()[(i, d_phi + j)] - beta_y[j] * y - intercepts[j];
                        for k in 0..d_phi {
                            v -= beta_phi[(k, j)] * data.features()[(i, k)];
                        }
                        out[(i, j)] = v;
                    }
                    out[(i, d_psi)] = 1.0;
                }
                out
            }
        };
        if self.include_constant {
            let at = matrix.ncols();
            matrix = matrix.insert_column(at, 1.0);
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite basis value".into()));
        }
        Ok(matrix)
    }
}

/// Posterior matrix p(e|x,y): n x E, rows on the probability simplex.
pub fn build_env_basis(classifier: &EnvClassifier, data: &Dataset) -> Result<DMatrix<f64>> {
    classifier.posterior_matrix(data)
}

/// Hard-sample basis: n x 2 matrix of [squared residual of f_id, 1].
pub fn build_jtt_basis(f_id: &LinearPredictor, data: &Dataset) -> Result<DMatrix<f64>> {
    let preds = f_id.predict(data.features())?;
    let n = data.n();
    let mut out = DMatrix::zeros(n, 2);
    for i in 0..n {
        let r = preds[i] - data.targets()[i];
        out[(i, 0)] = r * r;
        out[(i, 1)] = 1.0;
    }
    Ok(out)
}

/// Per-bin least-squares coefficients over a grouping basis.
#[derive(Debug, Clone)]
pub struct FittedGrouping {
    /// One entry per bin; `None` is the identity sentinel for empty bins
    /// (the pseudolabel falls back to the bin value).
    pub lambdas: Vec<Option<DVector<f64>>>,
    /// Condition estimate of each bin's design, `None` for sentinel bins or
    /// exactly singular designs.
    pub conditions: Vec<Option<f64>>,
}

/// Fits y on the basis columns independently inside every level set.
///
/// Underdetermined or rank-deficient bins get the minimum-norm solution;
/// `ridge_lambda` (applied to all columns alike) is available for
/// conditioning but defaults to 0 in the pipeline.
pub fn fit_on_levelsets(
    basis: &DMatrix<f64>,
    y: &[f64],
    partition: &LevelPartition,
    ridge_lambda: f64,
) -> Result<FittedGrouping> {
    let n = partition.n();
    if basis.nrows() != n || y.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "basis {} rows, y {} entries, partition {} rows",
            basis.nrows(),
            y.len(),
            n
        )));
    }
    if !(ridge_lambda >= 0.0 && ridge_lambda.is_finite()) {
        return Err(Error::Validation("ridge_lambda must be finite and >= 0".into()));
    }
    let j = basis.ncols();
    let rows_by_bin = partition.rows_by_bin();

    // Bins are independent; fit them in parallel and collect in bin order.
    let fits: Vec<(Option<DVector<f64>>, Option<f64>)> = rows_by_bin
        .par_iter()
        .map(|rows| {
            if rows.is_empty() {
                return (None, None);
            }
            let a = DMatrix::from_fn(rows.len(), j, |r, c| basis[(rows[r], c)]);
            let yb = DVector::from_fn(rows.len(), |r, _| y[rows[r]]);
            let (lambda, condition) = svd_ridge_solve(&a, &yb, ridge_lambda);
            (Some(lambda), condition)
        })
        .collect();

    let (lambdas, conditions) = fits.into_iter().unzip();
    Ok(FittedGrouping { lambdas, conditions })
}

/// Evaluates the per-bin fits row by row: the pseudolabel of row i is
/// `lambda_{bin(i)} . basis_row(i)`, or the bin value for sentinel bins.
pub fn eval_pseudolabels(
    fitted: &FittedGrouping,
    basis: &DMatrix<f64>,
    partition: &LevelPartition,
) -> Result<Vec<f64>> {
    let n = partition.n();
    if basis.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "basis has {} rows, partition has {}",
            basis.nrows(),
            n
        )));
    }
    if fitted.lambdas.len() != partition.n_bins() {
        return Err(Error::DimensionMismatch(format!(
            "{} fitted bins vs {} partition bins",
            fitted.lambdas.len(),
            partition.n_bins()
        )));
    }
    let j = basis.ncols();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let b = partition.assignment[i];
        let value = match &fitted.lambdas[b] {
            Some(lambda) => {
                if lambda.len() != j {
                    return Err(Error::DimensionMismatch(format!(
                        "bin {b} has {} coefficients for {} basis columns",
                        lambda.len(),
                        j
                    )));
                }
                (0..j).map(|c| lambda[c] * basis[(i, c)]).sum()
            }
            None => partition.values[b],
        };
        out.push(value);
    }
    Ok(out)
}
