//! Multinomial logistic regression over joint (x, y) features.
//!
//! Environment posteriors p(e|x,y) are the spanning elements of the
//! environment grouping basis, so the classifier consumes the label as an
//! input feature alongside the covariates. Training is full-batch gradient
//! descent with Armijo backtracking from a zero initialization; the problem
//! is convex, so the run is deterministic and seed-free.
//!
//! Implementation choices:
//! - features are standardized internally (stored means/scales), so step
//!   sizes transfer across datasets;
//! - the intercept is never penalized;
//! - `FeatureMap::Quadratic` appends all pairwise products `z_i z_j`
//!   (i <= j) of the joint input z = (x, y). Linear log-odds cannot express
//!   environment structure that only shows up in second moments, which is
//!   exactly the situation for mean-zero Gaussian environments that differ
//!   in a mixing coefficient, so the quadratic map is the default for the
//!   synthetic benchmark.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Expansion applied to the joint input z = (x, y) before the linear layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMap {
    /// z itself.
    Linear,
    /// z followed by all products z_i * z_j with i <= j.
    Quadratic,
}

impl FeatureMap {
    /// Expanded dimension for a length-k input.
    pub fn dim(self, k: usize) -> usize {
        match self {
            FeatureMap::Linear => k,
            FeatureMap::Quadratic => k + k * (k + 1) / 2,
        }
    }

    /// Writes the expanded features of `z` into `out` (cleared first).
    pub fn expand_into(self, z: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(z);
        if let FeatureMap::Quadratic = self {
            for i in 0..z.len() {
                for j in i..z.len() {
                    out.push(z[i] * z[j]);
                }
            }
        }
    }
}

/// Trained multinomial logistic classifier for environment posteriors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnvClassifier {
    /// One weight row per class over standardized features, intercept last:
    /// E x (F+1).
    pub weights: DMatrix<f64>,
    /// Per-feature training means (length F).
    pub means: DVector<f64>,
    /// Per-feature training standard deviations; constant features get 1.
    pub scales: DVector<f64>,
    pub feature_map: FeatureMap,
    /// Joint input dimension d + 1 (covariates plus label).
    pub input_dim: usize,
    pub n_classes: usize,
    /// False when gradient descent hit max_iters before the tolerance.
    pub converged: bool,
    pub n_iters: usize,
    pub final_grad_norm: f64,
}

impl EnvClassifier {
    /// Classifier with all-zero weights: every posterior is uniform 1/E.
    pub fn uniform(feature_map: FeatureMap, input_dim: usize, n_classes: usize) -> Self {
        let f = feature_map.dim(input_dim);
        EnvClassifier {
            weights: DMatrix::zeros(n_classes, f + 1),
            means: DVector::zeros(f),
            scales: DVector::from_element(f, 1.0),
            feature_map,
            input_dim,
            n_classes,
            converged: true,
            n_iters: 0,
            final_grad_norm: 0.0,
        }
    }

    /// Standardized, intercept-augmented feature vector for one sample.
    fn augmented(&self, x_row: &[f64], y: f64) -> Result<DVector<f64>> {
        if x_row.len() + 1 != self.input_dim {
            return Err(Error::DimensionMismatch(format!(
                "classifier expects {} joint inputs, got {}",
                self.input_dim,
                x_row.len() + 1
            )));
        }
        let mut z: Vec<f64> = Vec::with_capacity(self.input_dim);
        z.extend_from_slice(x_row);
        z.push(y);
        let mut expanded = Vec::new();
        self.feature_map.expand_into(&z, &mut expanded);
        let f = expanded.len();
        let mut aug = DVector::zeros(f + 1);
        for j in 0..f {
            aug[j] = (expanded[j] - self.means[j]) / self.scales[j];
        }
        aug[f] = 1.0;
        Ok(aug)
    }

    /// Posterior probabilities p(e|x,y), explicitly renormalized to sum 1.
    pub fn posteriors(&self, x_row: &[f64], y: f64) -> Result<Vec<f64>> {
        let aug = self.augmented(x_row, y)?;
        let logits = &self.weights * aug;
        Ok(softmax_row(logits.as_slice()))
    }

    /// n x E matrix of posteriors for every row of `data`.
    pub fn posterior_matrix(&self, data: &Dataset) -> Result<DMatrix<f64>> {
        let n = data.n();
        let mut out = DMatrix::zeros(n, self.n_classes);
        let mut row = vec![0.0; data.d()];
        for i in 0..n {
            for (j, slot) in row.iter_mut().enumerate() {
                *slot = data.features()[(i, j)];
            }
            let p = self.posteriors(&row, data.targets()[i])?;
            for (e, &pe) in p.iter().enumerate() {
                out[(i, e)] = pe;
            }
        }
        Ok(out)
    }
}

fn softmax_row(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}

/// Mean negative log likelihood plus l2 penalty, and its gradient in `w`.
/// `z_aug` is the n x (F+1) standardized design with trailing 1s; the
/// intercept column is excluded from the penalty.
fn loss_and_grad(
    w: &DMatrix<f64>,
    z_aug: &DMatrix<f64>,
    labels: &[usize],
    l2: f64,
) -> (f64, DMatrix<f64>) {
    let n = z_aug.nrows();
    let f_aug = z_aug.ncols();
    let e = w.nrows();
    let logits = z_aug * w.transpose();

    let mut loss = 0.0;
    let mut resid = DMatrix::zeros(n, e);
    let mut row = vec![0.0; e];
    for i in 0..n {
        for (c, slot) in row.iter_mut().enumerate() {
            *slot = logits[(i, c)];
        }
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_sum = row.iter().map(|&l| (l - max).exp()).sum::<f64>().ln() + max;
        loss -= row[labels[i]] - log_sum;
        for c in 0..e {
            let p = (row[c] - log_sum).exp();
            resid[(i, c)] = p - if c == labels[i] { 1.0 } else { 0.0 };
        }
    }
    loss /= n as f64;

    let mut grad = resid.transpose() * z_aug;
    grad /= n as f64;
    for c in 0..e {
        for j in 0..f_aug - 1 {
            loss += 0.5 * l2 * w[(c, j)] * w[(c, j)];
            grad[(c, j)] += l2 * w[(c, j)];
        }
    }
    (loss, grad)
}

/// Trains the classifier on `data` (environments required, E >= 2).
///
/// Stops when the gradient infinity-norm drops below `tol` or after
/// `max_iters` accepted steps; in the latter case `converged` is false and
/// the best iterate found is returned.
pub fn fit_env_classifier(
    data: &Dataset,
    feature_map: FeatureMap,
    max_iters: usize,
    tol: f64,
    l2: f64,
) -> Result<EnvClassifier> {
    let labels: Vec<usize> = data
        .envs()
        .ok_or_else(|| Error::Validation("environment labels required".into()))?
        .to_vec();
    let e = data.n_envs();
    if e < 2 {
        return Err(Error::Validation(format!("need at least 2 environments, found {e}")));
    }
    if l2 < 0.0 {
        return Err(Error::Validation("l2 must be nonnegative".into()));
    }
    let n = data.n();
    let input_dim = data.d() + 1;
    let f = feature_map.dim(input_dim);

    // Expand every row once; standardization statistics come from this pass.
    let mut raw = DMatrix::zeros(n, f);
    let mut z = vec![0.0; input_dim];
    let mut expanded = Vec::with_capacity(f);
    for i in 0..n {
        for (j, slot) in z[..data.d()].iter_mut().enumerate() {
            *slot = data.features()[(i, j)];
        }
        z[input_dim - 1] = data.targets()[i];
        feature_map.expand_into(&z, &mut expanded);
        for j in 0..f {
            raw[(i, j)] = expanded[j];
        }
    }
    let mut means = DVector::zeros(f);
    let mut scales = DVector::zeros(f);
    for j in 0..f {
        let col = raw.column(j);
        let mean = col.mean();
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        means[j] = mean;
        scales[j] = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
    }
    let mut z_aug = DMatrix::zeros(n, f + 1);
    for i in 0..n {
        for j in 0..f {
            z_aug[(i, j)] = (raw[(i, j)] - means[j]) / scales[j];
        }
        z_aug[(i, f)] = 1.0;
    }

    let mut w = DMatrix::zeros(e, f + 1);
    let (mut loss, mut grad) = loss_and_grad(&w, &z_aug, &labels, l2);
    let mut best_w = w.clone();
    let mut best_grad_norm = grad.amax();
    let mut step = 1.0f64;
    let mut iters = 0;
    let mut converged = false;

    for _ in 0..max_iters {
        let grad_norm = grad.amax();
        if grad_norm < tol {
            converged = true;
            break;
        }
        let grad_sq = grad.iter().map(|g| g * g).sum::<f64>();
        // Armijo backtracking on the steepest-descent direction.
        let mut accepted = false;
        while step > 1e-18 {
            let candidate = &w - step * &grad;
            let (cand_loss, cand_grad) = loss_and_grad(&candidate, &z_aug, &labels, l2);
            if cand_loss <= loss - 1e-4 * step * grad_sq {
                // Barzilai-Borwein initial step for the next iteration:
                // with dw = -step*grad and dg the gradient change, start
                // from <dw,dg>/<dg,dg> (the short BB step, which the Armijo
                // test above accepts nearly always). A plain doubling
                // schedule needs orders of magnitude more iterations on the
                // poorly conditioned quadratic-feature problems this
                // classifier is used on.
                let mut dw_dg = 0.0;
                let mut dg_dg = 0.0;
                for (g, cg) in grad.iter().zip(cand_grad.iter()) {
                    let d = cg - g;
                    dw_dg -= step * g * d;
                    dg_dg += d * d;
                }
                step = if dw_dg > 0.0 && dg_dg > 0.0 {
                    (dw_dg / dg_dg).clamp(1e-12, 1e6)
                } else {
                    (step * 2.0).min(1e6)
                };
                w = candidate;
                loss = cand_loss;
                grad = cand_grad;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break; // at numerical floor; return best so far
        }
        iters += 1;
        let gn = grad.amax();
        if gn < best_grad_norm {
            best_grad_norm = gn;
            best_w = w.clone();
        }
    }
    if !converged {
        // max_iters exhausted (or stalled): report the best iterate seen.
        w = best_w;
    }
    let final_grad_norm = loss_and_grad(&w, &z_aug, &labels, l2).1.amax();

    Ok(EnvClassifier {
        weights: w,
        means,
        scales,
        feature_map,
        input_dim,
        n_classes: e,
        converged,
        n_iters: iters,
        final_grad_norm,
    })
}
