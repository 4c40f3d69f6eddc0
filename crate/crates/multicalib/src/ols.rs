//! Least-squares and ridge regression solver.
//!
//! `ols_fit` minimizes `sum (y - X b - c)^2 + ridge_lambda * |b|^2` with an
//! unpenalized intercept `c`. The intercept is handled by centering, which
//! makes the penalized problem equivalent to a plain (ridge) solve on the
//! centered data.
//!
//! Implementation choices:
//! - The centered design is factored by SVD. With `ridge_lambda = 0` and a
//!   rank-deficient design this yields the minimum-norm solution instead of
//!   failing, which keeps per-bin fits total even for tiny bins.
//! - With `ridge_lambda > 0` the singular values are filtered by
//!   `s / (s^2 + lambda)`, the exact ridge solution.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Result of a least-squares fit.
#[derive(Debug, Clone)]
pub struct OlsSolution {
    pub coeffs: DVector<f64>,
    pub intercept: f64,
    /// Residual sum of squares at the solution.
    pub rss: f64,
    /// True when the (centered) design did not have full column rank.
    pub rank_deficient: bool,
    /// Ratio of largest to smallest singular value; `None` when the design
    /// is exactly singular.
    pub condition: Option<f64>,
}

impl OlsSolution {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.coeffs.iter().zip(row).map(|(c, x)| c * x).sum::<f64>() + self.intercept
    }
}

/// Solves a (possibly ridge-penalized) least-squares problem without an
/// intercept column: minimize `|y - A z|^2 + lambda |z|^2`, returning the
/// minimum-norm minimizer when `lambda = 0` and `A` is rank deficient,
/// along with the condition estimate of `A` (`None` when exactly singular).
pub(crate) fn svd_ridge_solve(
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
) -> (DVector<f64>, Option<f64>) {
    let svd = a.clone().svd(true, true);
    let u = svd.u.as_ref().expect("svd with u requested");
    let v_t = svd.v_t.as_ref().expect("svd with v_t requested");
    let s = &svd.singular_values;
    let s_max = s.iter().cloned().fold(0.0, f64::max);
    let s_min = s.iter().cloned().fold(f64::INFINITY, f64::min);
    let tol = rank_tolerance(a.nrows(), a.ncols(), s_max);
    let uty = u.transpose() * y;
    let mut filtered = DVector::zeros(s.len());
    for k in 0..s.len() {
        let sk = s[k];
        filtered[k] = if lambda > 0.0 {
            sk / (sk * sk + lambda) * uty[k]
        } else if sk > tol {
            uty[k] / sk
        } else {
            0.0
        };
    }
    (v_t.transpose() * filtered, (s_min > tol).then(|| s_max / s_min))
}

fn rank_tolerance(nrows: usize, ncols: usize, s_max: f64) -> f64 {
    nrows.max(ncols) as f64 * f64::EPSILON * s_max
}

/// Fits `y ~ X` by least squares with an unpenalized intercept.
pub fn ols_fit(x: &DMatrix<f64>, y: &DVector<f64>, ridge_lambda: f64) -> Result<OlsSolution> {
    let n = x.nrows();
    let d = x.ncols();
    if n == 0 || d == 0 {
        return Err(Error::Validation("empty design matrix".into()));
    }
    if n != y.len() {
        return Err(Error::DimensionMismatch(format!("{} rows vs {} targets", n, y.len())));
    }
    if ridge_lambda < 0.0 || !ridge_lambda.is_finite() {
        return Err(Error::Validation("ridge_lambda must be finite and >= 0".into()));
    }
    if x.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("non-finite value in regression input".into()));
    }

    let col_means = DVector::from_fn(d, |j, _| x.column(j).mean());
    let y_mean = y.mean();
    let xc = DMatrix::from_fn(n, d, |i, j| x[(i, j)] - col_means[j]);
    let yc = y.map(|v| v - y_mean);

    let svd = xc.clone().svd(true, true);
    let u = svd.u.as_ref().expect("svd with u requested");
    let v_t = svd.v_t.as_ref().expect("svd with v_t requested");
    let s = &svd.singular_values;
    let s_max = s.iter().cloned().fold(0.0, f64::max);
    let s_min = s.iter().cloned().fold(f64::INFINITY, f64::min);
    let tol = rank_tolerance(n, d, s_max);
    let rank = s.iter().filter(|&&sk| sk > tol).count();

    let uty = u.transpose() * &yc;
    let mut filtered = DVector::zeros(s.len());
    for k in 0..s.len() {
        let sk = s[k];
        filtered[k] = if ridge_lambda > 0.0 {
            sk / (sk * sk + ridge_lambda) * uty[k]
        } else if sk > tol {
            uty[k] / sk
        } else {
            0.0
        };
    }
    let coeffs = v_t.transpose() * filtered;
    let intercept = y_mean - col_means.dot(&coeffs);

    let mut rss = 0.0;
    for i in 0..n {
        let pred: f64 = (0..d).map(|j| coeffs[j] * x[(i, j)]).sum::<f64>() + intercept;
        rss += (y[i] - pred) * (y[i] - pred);
    }

    Ok(OlsSolution {
        coeffs,
        intercept,
        rss,
        rank_deficient: rank < d,
        condition: (s_min > tol).then(|| s_max / s_min),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent least-squares oracle: Householder QR on the design
    /// augmented with an explicit intercept column. Deliberately avoids the
    /// SVD/centering path used by `ols_fit`.
    fn qr_solve_with_intercept(x: &DMatrix<f64>, y: &DVector<f64>) -> (DVector<f64>, f64) {
        let n = x.nrows();
        let d = x.ncols();
        let mut a = DMatrix::zeros(n, d + 1);
        for i in 0..n {
            a[(i, 0)] = 1.0;
            for j in 0..d {
                a[(i, j + 1)] = x[(i, j)];
            }
        }
        let mut r = a.clone();
        let mut qty = y.clone();
        for k in 0..(d + 1) {
            // Householder reflector for column k.
            let mut norm = 0.0;
            for i in k..n {
                norm += r[(i, k)] * r[(i, k)];
            }
            let norm = norm.sqrt();
            if norm == 0.0 {
                continue;
            }
            let alpha = if r[(k, k)] > 0.0 { -norm } else { norm };
            let mut v = vec![0.0; n];
            v[k] = r[(k, k)] - alpha;
            for i in (k + 1)..n {
                v[i] = r[(i, k)];
            }
            let vtv: f64 = v.iter().map(|vi| vi * vi).sum();
            if vtv == 0.0 {
                continue;
            }
            for j in k..(d + 1) {
                let dot: f64 = (k..n).map(|i| v[i] * r[(i, j)]).sum();
                let scale = 2.0 * dot / vtv;
                for i in k..n {
                    r[(i, j)] -= scale * v[i];
                }
            }
            let dot: f64 = (k..n).map(|i| v[i] * qty[i]).sum();
            let scale = 2.0 * dot / vtv;
            for i in k..n {
                qty[i] -= scale * v[i];
            }
        }
        // Back substitution on the upper-triangular system.
        let mut beta = DVector::zeros(d + 1);
        for j in (0..(d + 1)).rev() {
            let mut acc = qty[j];
            for l in (j + 1)..(d + 1) {
                acc -= r[(j, l)] * beta[l];
            }
            beta[j] = acc / r[(j, j)];
        }
        (DVector::from_fn(d, |j, _| beta[j + 1]), beta[0])
    }

    fn lcg_stream(seed: u64, len: usize) -> Vec<f64> {
        // Tiny deterministic generator so oracle tests do not depend on the
        // crate's RNG choices.
        let mut state = seed;
        let mut out = Vec::with_capacity(len);
        for _ in 0..len {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            out.push(((state >> 11) as f64) / ((1u64 << 53) as f64) - 0.5);
        }
        out
    }

    #[test]
    fn exact_affine_data_recovered() {
        let x = DMatrix::from_row_slice(4, 2, &[0.0, 1.0, 1.0, 0.0, 2.0, 3.0, -1.0, 4.0]);
        let y = DVector::from_fn(4, |i, _| 2.0 * x[(i, 0)] - 0.5 * x[(i, 1)] + 3.0);
        let sol = ols_fit(&x, &y, 0.0).unwrap();
        assert!((sol.coeffs[0] - 2.0).abs() < 1e-10);
        assert!((sol.coeffs[1] + 0.5).abs() < 1e-10);
        assert!((sol.intercept - 3.0).abs() < 1e-10);
        assert!(sol.rss < 1e-18);
        assert!(!sol.rank_deficient);
    }

    #[test]
    fn zero_design_gives_mean_intercept() {
        let x = DMatrix::zeros(5, 3);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        let sol = ols_fit(&x, &y, 0.0).unwrap();
        assert_eq!(sol.coeffs.as_slice(), &[0.0, 0.0, 0.0]);
        assert!((sol.intercept - 3.0).abs() < 1e-12);
        assert!(sol.rank_deficient);
        assert!(sol.condition.is_none());
    }

    #[test]
    fn matches_qr_oracle_on_random_system() {
        let vals = lcg_stream(42, 50 * 3);
        let x = DMatrix::from_row_slice(50, 3, &vals);
        let yv = lcg_stream(7, 50);
        let y = DVector::from_vec(yv);
        let sol = ols_fit(&x, &y, 0.0).unwrap();
        let (beta, intercept) = qr_solve_with_intercept(&x, &y);
        for j in 0..3 {
            assert!(
                (sol.coeffs[j] - beta[j]).abs() < 1e-8,
                "coefficient {j}: {} vs oracle {}",
                sol.coeffs[j],
                beta[j]
            );
        }
        assert!((sol.intercept - intercept).abs() < 1e-8);
    }

    #[test]
    fn residuals_orthogonal_to_regressors() {
        let vals = lcg_stream(3, 40 * 4);
        let x = DMatrix::from_row_slice(40, 4, &vals);
        let y = DVector::from_vec(lcg_stream(9, 40));
        let sol = ols_fit(&x, &y, 0.0).unwrap();
        let resid = DVector::from_fn(40, |i, _| {
            y[i] - (0..4).map(|j| sol.coeffs[j] * x[(i, j)]).sum::<f64>() - sol.intercept
        });
        for j in 0..4 {
            let xc_mean = x.column(j).mean();
            let dot: f64 = (0..40).map(|i| (x[(i, j)] - xc_mean) * resid[i]).sum();
            assert!(dot.abs() < 1e-8, "column {j} not orthogonal: {dot}");
        }
        // Residuals also sum to zero because of the intercept.
        assert!(resid.sum().abs() < 1e-8);
    }

    #[test]
    fn huge_ridge_shrinks_to_mean() {
        let vals = lcg_stream(11, 30 * 2);
        let x = DMatrix::from_row_slice(30, 2, &vals);
        let y = DVector::from_vec(lcg_stream(13, 30));
        let sol = ols_fit(&x, &y, 1e12).unwrap();
        assert!(sol.coeffs.amax() < 1e-10);
        assert!((sol.intercept - y.mean()).abs() < 1e-10);
    }

    #[test]
    fn duplicated_column_takes_minimum_norm_solution() {
        // Two identical columns: least-squares solutions form a line; the
        // minimum-norm one splits the weight evenly.
        let base = lcg_stream(21, 25);
        let mut x = DMatrix::zeros(25, 2);
        for i in 0..25 {
            x[(i, 0)] = base[i];
            x[(i, 1)] = base[i];
        }
        let y = DVector::from_fn(25, |i, _| 3.0 * base[i] + 1.0);
        let sol = ols_fit(&x, &y, 0.0).unwrap();
        assert!(sol.rank_deficient);
        assert!((sol.coeffs[0] - 1.5).abs() < 1e-8);
        assert!((sol.coeffs[1] - 1.5).abs() < 1e-8);
        assert!((sol.intercept - 1.0).abs() < 1e-8);
    }

    #[test]
    fn ridge_matches_closed_form_on_small_system() {
        // Closed form (Xc' Xc + lambda I) b = Xc' yc computed by hand-rolled
        // 2x2 solve.
        let vals = lcg_stream(31, 20 * 2);
        let x = DMatrix::from_row_slice(20, 2, &vals);
        let y = DVector::from_vec(lcg_stream(37, 20));
        let lambda = 0.7;
        let sol = ols_fit(&x, &y, lambda).unwrap();

        let m0 = x.column(0).mean();
        let m1 = x.column(1).mean();
        let ym = y.mean();
        let (mut g00, mut g01, mut g11, mut b0, mut b1) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for i in 0..20 {
            let a = x[(i, 0)] - m0;
            let b = x[(i, 1)] - m1;
            let yc = y[i] - ym;
            g00 += a * a;
            g01 += a * b;
            g11 += b * b;
            b0 += a * yc;
            b1 += b * yc;
        }
        g00 += lambda;
        g11 += lambda;
        let det = g00 * g11 - g01 * g01;
        let c0 = (g11 * b0 - g01 * b1) / det;
        let c1 = (g00 * b1 - g01 * b0) / det;
        assert!((sol.coeffs[0] - c0).abs() < 1e-10);
        assert!((sol.coeffs[1] - c1).abs() < 1e-10);
    }
}
