//! Closed-form analysis of the pseudolabel iteration under joint-Gaussian
//! data.
//!
//! With (Phi, Psi, Y) jointly Gaussian and mean zero, every step of the
//! pipeline has a population closed form: the regression coefficients of Y
//! on (Phi, Psi) and of Psi on (Phi, Y) determine a linear recurrence on
//! the iterate's coefficients whose convergence rate is a single scalar
//! M in [0, 1). This module computes those quantities directly from the
//! block-partitioned covariance so sampled runs can be checked against
//! exact targets.
//!
//! Implementation choices:
//! - all block solves go through Cholesky factorizations, never explicit
//!   inverses; a failed factorization is reported as a not-positive-definite
//!   error;
//! - M is evaluated by two independent routes (coefficient product and
//!   Schur-complement formula) and the disagreement is checked against a
//!   condition-scaled tolerance;
//! - means are assumed zero throughout, matching the analysis convention;
//!   samplers recenter before comparing against these values.

use nalgebra::{Cholesky, DMatrix, DVector};
use std::path::Path;

use crate::error::{Error, Result};

/// Symmetric positive-definite covariance over the ordering
/// (Phi block, Psi block, Y), with the block split recorded.
#[derive(Debug, Clone)]
pub struct BlockCov {
    sigma: DMatrix<f64>,
    d_phi: usize,
    d_psi: usize,
}

impl BlockCov {
    /// Validates symmetry and positive definiteness; `d_phi` splits the
    /// feature coordinates into the leading causal block and the rest.
    pub fn new(sigma: DMatrix<f64>, d_phi: usize) -> Result<Self> {
        let k = sigma.nrows();
        if k != sigma.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "covariance must be square, got {}x{}",
                k,
                sigma.ncols()
            )));
        }
        if k < 3 {
            return Err(Error::Validation(
                "covariance needs at least 3 coordinates (phi, psi, y)".into(),
            ));
        }
        let d = k - 1;
        if d_phi == 0 || d_phi >= d {
            return Err(Error::Validation(format!(
                "d_phi must be in 1..={} for {} feature coordinates",
                d - 1,
                d
            )));
        }
        let scale = sigma.amax().max(1.0);
        for i in 0..k {
            for j in 0..i {
                if (sigma[(i, j)] - sigma[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::Validation(format!(
                        "covariance not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        // Work with the exactly symmetrized matrix from here on.
        let sym = (&sigma + sigma.transpose()) * 0.5;
        if Cholesky::new(sym.clone()).is_none() {
            return Err(Error::Numerical("covariance is not positive definite".into()));
        }
        Ok(BlockCov { sigma: sym, d_phi, d_psi: d - d_phi })
    }

    /// Reads a headerless numeric CSV square matrix.
    pub fn from_csv<P: AsRef<Path>>(path: P, d_phi: usize) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(false).from_path(path.as_ref())?;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record?;
            let mut row = Vec::with_capacity(record.len());
            for (col, field) in record.iter().enumerate() {
                row.push(field.trim().parse::<f64>().map_err(|_| {
                    Error::Validation(format!(
                        "non-numeric covariance entry at row {}, column {}",
                        line + 1,
                        col + 1
                    ))
                })?);
            }
            rows.push(row);
        }
        let k = rows.len();
        if k == 0 {
            return Err(Error::Validation("empty covariance file".into()));
        }
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::Validation("covariance rows have inconsistent lengths".into()));
        }
        BlockCov::new(DMatrix::from_fn(k, k, |i, j| rows[i][j]), d_phi)
    }

    pub fn d_phi(&self) -> usize {
        self.d_phi
    }

    pub fn d_psi(&self) -> usize {
        self.d_psi
    }

    pub fn dim(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    fn block(&self, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| {
            self.sigma[(rows.start + i, cols.start + j)]
        })
    }

    fn phi_range(&self) -> std::ops::Range<usize> {
        0..self.d_phi
    }

    fn psi_range(&self) -> std::ops::Range<usize> {
        self.d_phi..self.d_phi + self.d_psi
    }

    fn y_index(&self) -> usize {
        self.d_phi + self.d_psi
    }

    pub fn s_phiphi(&self) -> DMatrix<f64> {
        self.block(self.phi_range(), self.phi_range())
    }

    pub fn s_phipsi(&self) -> DMatrix<f64> {
        self.block(self.phi_range(), self.psi_range())
    }

    pub fn s_psipsi(&self) -> DMatrix<f64> {
        self.block(self.psi_range(), self.psi_range())
    }

    pub fn s_phiy(&self) -> DVector<f64> {
        DVector::from_fn(self.d_phi, |i, _| self.sigma[(i, self.y_index())])
    }

    pub fn s_psiy(&self) -> DVector<f64> {
        DVector::from_fn(self.d_psi, |i, _| self.sigma[(self.d_phi + i, self.y_index())])
    }

    pub fn s_yy(&self) -> f64 {
        self.sigma[(self.y_index(), self.y_index())]
    }

    /// Largest-to-smallest eigenvalue ratio, used to scale identity-check
    /// tolerances.
    pub fn condition(&self) -> f64 {
        let eigs = self.sigma.clone().symmetric_eigen().eigenvalues;
        let max = eigs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
        if min <= 0.0 {
            f64::INFINITY
        } else {
            max / min
        }
    }
}

fn chol_solve_mat(a: &DMatrix<f64>, b: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let chol = Cholesky::new(a.clone())
        .ok_or_else(|| Error::Numerical(format!("{what} block is not positive definite")))?;
    Ok(chol.solve(b))
}

fn chol_solve_vec(a: &DMatrix<f64>, b: &DVector<f64>, what: &str) -> Result<DVector<f64>> {
    let chol = Cholesky::new(a.clone())
        .ok_or_else(|| Error::Numerical(format!("{what} block is not positive definite")))?;
    Ok(chol.solve(b))
}

/// Population regression coefficients of Y on (Phi, Psi) and of Psi on
/// (Phi, Y), all means zero.
#[derive(Debug, Clone)]
pub struct RegressionStars {
    pub alpha_phi: DVector<f64>,
    pub alpha_psi: DVector<f64>,
    /// d_phi x d_psi: Phi coefficients per Psi coordinate.
    pub beta_phi: DMatrix<f64>,
    /// Y coefficient per Psi coordinate.
    pub beta_y: DVector<f64>,
}

/// Solves the two population regressions from the covariance blocks.
pub fn compute_stars(cov: &BlockCov) -> Result<RegressionStars> {
    let d_phi = cov.d_phi();
    let d_psi = cov.d_psi();
    let d = d_phi + d_psi;

    // Y on (Phi, Psi).
    let mut a = DMatrix::zeros(d, d);
    a.view_mut((0, 0), (d_phi, d_phi)).copy_from(&cov.s_phiphi());
    a.view_mut((0, d_phi), (d_phi, d_psi)).copy_from(&cov.s_phipsi());
    a.view_mut((d_phi, 0), (d_psi, d_phi)).copy_from(&cov.s_phipsi().transpose());
    a.view_mut((d_phi, d_phi), (d_psi, d_psi)).copy_from(&cov.s_psipsi());
    let mut b = DVector::zeros(d);
    b.rows_mut(0, d_phi).copy_from(&cov.s_phiy());
    b.rows_mut(d_phi, d_psi).copy_from(&cov.s_psiy());
    let alpha = chol_solve_vec(&a, &b, "(phi,psi)")?;
    let alpha_phi = alpha.rows(0, d_phi).into_owned();
    let alpha_psi = alpha.rows(d_phi, d_psi).into_owned();

    // Psi on (Phi, Y).
    let mut c = DMatrix::zeros(d_phi + 1, d_phi + 1);
    c.view_mut((0, 0), (d_phi, d_phi)).copy_from(&cov.s_phiphi());
    for i in 0..d_phi {
        c[(i, d_phi)] = cov.s_phiy()[i];
        c[(d_phi, i)] = cov.s_phiy()[i];
    }
    c[(d_phi, d_phi)] = cov.s_yy();
    let mut rhs = DMatrix::zeros(d_phi + 1, d_psi);
    rhs.view_mut((0, 0), (d_phi, d_psi)).copy_from(&cov.s_phipsi());
    for j in 0..d_psi {
        rhs[(d_phi, j)] = cov.s_psiy()[j];
    }
    let beta = chol_solve_mat(&c, &rhs, "(phi,y)")?;
    let beta_phi = beta.view((0, 0), (d_phi, d_psi)).into_owned();
    let beta_y = DVector::from_fn(d_psi, |j, _| beta[(d_phi, j)]);

    Ok(RegressionStars { alpha_phi, alpha_psi, beta_phi, beta_y })
}

/// Both evaluations of the convergence rate: the coefficient product
/// beta_y . alpha_psi, and the Schur-complement formula
/// (1 / Var(Y|Phi)) Cov(Y,Psi|Phi) Var(Psi|Phi)^{-1} Cov(Psi,Y|Phi).
pub fn compute_m_routes(cov: &BlockCov) -> Result<(f64, f64)> {
    let stars = compute_stars(cov)?;
    let product = stars.beta_y.dot(&stars.alpha_psi);

    let s_phiphi = cov.s_phiphi();
    let inv_phiy = chol_solve_vec(&s_phiphi, &cov.s_phiy(), "phi")?;
    let inv_phipsi = chol_solve_mat(&s_phiphi, &cov.s_phipsi(), "phi")?;
    let var_y_given_phi = cov.s_yy() - cov.s_phiy().dot(&inv_phiy);
    let cov_ypsi_given_phi =
        cov.s_psiy() - cov.s_phipsi().transpose() * &inv_phiy;
    let var_psi_given_phi = cov.s_psipsi() - cov.s_phipsi().transpose() * inv_phipsi;
    let solved = chol_solve_vec(&var_psi_given_phi, &cov_ypsi_given_phi, "psi|phi")?;
    let schur = cov_ypsi_given_phi.dot(&solved) / var_y_given_phi;
    Ok((product, schur))
}

/// Convergence rate M in [0, 1), with the two routes cross-checked against
/// a condition-scaled tolerance.
pub fn compute_m(cov: &BlockCov) -> Result<f64> {
    let (product, schur) = compute_m_routes(cov)?;
    let tol = 1e-10 * (1.0 + cov.condition());
    if (product - schur).abs() > tol {
        return Err(Error::Numerical(format!(
            "rate evaluations disagree: {product} vs {schur} (tolerance {tol:.3e})"
        )));
    }
    let m = product.max(0.0);
    if !(0.0..1.0).contains(&m) {
        return Err(Error::Numerical(format!("rate {m} outside [0, 1)")));
    }
    Ok(m)
}

/// Coefficients of the limiting predictor E[Y|Phi].
pub fn target_coeffs(cov: &BlockCov) -> Result<DVector<f64>> {
    chol_solve_vec(&cov.s_phiphi(), &cov.s_phiy(), "phi")
}

/// Population coefficient recurrence: starting from the full-information
/// regression (alpha_phi, alpha_psi), each step maps
/// (a_phi, a_psi) -> (a_phi + U a_psi, R a_psi) with
/// U = beta_phi + alpha_phi beta_y' and R = alpha_psi beta_y'.
/// Returns the iterates for t = 0..=t_max.
pub fn hat_iteration(cov: &BlockCov, t_max: usize) -> Result<Vec<(DVector<f64>, DVector<f64>)>> {
    let stars = compute_stars(cov)?;
    let u = &stars.beta_phi + &stars.alpha_phi * stars.beta_y.transpose();
    let r = &stars.alpha_psi * stars.beta_y.transpose();

    let mut out = Vec::with_capacity(t_max + 1);
    let mut a_phi = stars.alpha_phi.clone();
    let mut a_psi = stars.alpha_psi.clone();
    out.push((a_phi.clone(), a_psi.clone()));
    for _ in 0..t_max {
        a_phi = &a_phi + &u * &a_psi;
        a_psi = &r * &a_psi;
        out.push((a_phi.clone(), a_psi.clone()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcg_stream(seed: u64, len: usize) -> Vec<f64> {
        let mut state = seed;
        let mut out = Vec::with_capacity(len);
        for _ in 0..len {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            out.push(((state >> 11) as f64) / ((1u64 << 53) as f64) - 0.5);
        }
        out
    }

    /// Random well-conditioned PD matrix: A'A/k + I/2.
    fn random_pd(seed: u64, k: usize) -> DMatrix<f64> {
        let vals = lcg_stream(seed, k * k);
        let a = DMatrix::from_row_slice(k, k, &vals);
        let mut sigma = a.transpose() * &a / k as f64;
        for i in 0..k {
            sigma[(i, i)] += 0.5;
        }
        sigma
    }

    fn simple_3(a: f64, b: f64) -> BlockCov {
        let sigma = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, a, 0.0, 1.0, b, a, b, 1.0]);
        BlockCov::new(sigma, 1).unwrap()
    }

    #[test]
    fn rejects_asymmetric_and_non_pd() {
        let asym = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.0, 0.1, 1.0, 0.0, 0.0, 0.0, 1.0]);
        assert!(BlockCov::new(asym, 1).is_err());
        let not_pd = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, 2.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let err = BlockCov::new(not_pd, 1).unwrap_err();
        assert!(err.is_numerical());
    }

    #[test]
    fn independent_case_has_zero_stars() {
        let sigma = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0, 1.0]));
        let cov = BlockCov::new(sigma, 1).unwrap();
        let stars = compute_stars(&cov).unwrap();
        assert!(stars.alpha_phi.amax() < 1e-14);
        assert!(stars.alpha_psi.amax() < 1e-14);
        assert!(stars.beta_phi.amax() < 1e-14);
        assert!(stars.beta_y.amax() < 1e-14);
    }

    #[test]
    fn scalar_case_hand_values() {
        // For Sigma = [[1,0,a],[0,1,b],[a,b,1]] the 2x2 solve gives
        // alpha = (a, b); regressing psi on (phi, y) gives
        // beta_phi = -ab/(1-a^2), beta_y = b/(1-a^2).
        let (a, b) = (0.3, 0.4);
        let cov = simple_3(a, b);
        let stars = compute_stars(&cov).unwrap();
        assert!((stars.alpha_phi[0] - a).abs() < 1e-12);
        assert!((stars.alpha_psi[0] - b).abs() < 1e-12);
        assert!((stars.beta_phi[(0, 0)] + a * b / (1.0 - a * a)).abs() < 1e-12);
        assert!((stars.beta_y[0] - b / (1.0 - a * a)).abs() < 1e-12);
    }

    #[test]
    fn residual_orthogonality_identity() {
        // Cov(Y - alpha . (Phi,Psi), (Phi,Psi)) = Sigma_xy - Sigma_xx alpha
        // must vanish, reconstructed from blocks only.
        for seed in [1u64, 2, 3, 4, 5] {
            let k = 5;
            let cov = BlockCov::new(random_pd(seed, k), 2).unwrap();
            let stars = compute_stars(&cov).unwrap();
            let d = k - 1;
            let mut alpha = DVector::zeros(d);
            alpha.rows_mut(0, 2).copy_from(&stars.alpha_phi);
            alpha.rows_mut(2, d - 2).copy_from(&stars.alpha_psi);
            let sxx = DMatrix::from_fn(d, d, |i, j| cov.sigma()[(i, j)]);
            let sxy = DVector::from_fn(d, |i, _| cov.sigma()[(i, d)]);
            let resid = &sxy - &sxx * &alpha;
            assert!(resid.amax() < 1e-10, "seed {seed}: residual {}", resid.amax());
        }
    }

    #[test]
    fn conditional_independence_gives_zero_rate() {
        // Psi correlates with Y only through Phi.
        let sigma = DMatrix::from_row_slice(
            3,
            3,
            &[1.0, 0.3, 0.5, 0.3, 1.0, 0.15, 0.5, 0.15, 1.0],
        );
        let cov = BlockCov::new(sigma, 1).unwrap();
        let m = compute_m(&cov).unwrap();
        assert!(m.abs() < 1e-12, "rate should vanish, got {m}");
    }

    #[test]
    fn scalar_rate_hand_value() {
        // a = 0: alpha_psi = b, beta_y = b, so M = b^2.
        let cov = simple_3(0.0, 0.5);
        let m = compute_m(&cov).unwrap();
        assert!((m - 0.25).abs() < 1e-12);
        let (product, schur) = compute_m_routes(&cov).unwrap();
        assert!((product - schur).abs() < 1e-12);
    }

    #[test]
    fn near_singular_rate_approaches_one() {
        let cov = simple_3(0.0, 0.9999);
        let m = compute_m(&cov).unwrap();
        assert!((0.99..1.0).contains(&m), "m = {m}");
    }

    #[test]
    fn rate_in_unit_interval_for_random_pd() {
        for seed in 10..30u64 {
            let cov = BlockCov::new(random_pd(seed, 6), 3).unwrap();
            let m = compute_m(&cov).unwrap();
            assert!((0.0..1.0).contains(&m), "seed {seed}: m = {m}");
        }
    }

    #[test]
    fn iteration_starts_at_stars() {
        let cov = BlockCov::new(random_pd(42, 5), 2).unwrap();
        let stars = compute_stars(&cov).unwrap();
        let iterates = hat_iteration(&cov, 0).unwrap();
        assert_eq!(iterates.len(), 1);
        assert!((&iterates[0].0 - &stars.alpha_phi).amax() < 1e-15);
        assert!((&iterates[0].1 - &stars.alpha_psi).amax() < 1e-15);
    }

    #[test]
    fn zero_rate_kills_psi_after_one_step() {
        let sigma = DMatrix::from_row_slice(
            3,
            3,
            &[1.0, 0.3, 0.5, 0.3, 1.0, 0.15, 0.5, 0.15, 1.0],
        );
        let cov = BlockCov::new(sigma, 1).unwrap();
        let iterates = hat_iteration(&cov, 5).unwrap();
        for (t, (_, a_psi)) in iterates.iter().enumerate().skip(1) {
            assert!(a_psi.amax() < 1e-12, "t = {t}: {}", a_psi.amax());
        }
    }

    #[test]
    fn psi_iterates_follow_geometric_closed_form() {
        // The psi block of the recurrence is rank one, so
        // a_psi^{(t)} = M^t alpha_psi exactly.
        let cov = BlockCov::new(random_pd(7, 6), 3).unwrap();
        let stars = compute_stars(&cov).unwrap();
        let m = compute_m(&cov).unwrap();
        let iterates = hat_iteration(&cov, 30).unwrap();
        for (t, (_, a_psi)) in iterates.iter().enumerate() {
            let expected = &stars.alpha_psi * m.powi(t as i32);
            let scale = expected.amax().max(1e-30);
            assert!(
                (a_psi - &expected).amax() / scale < 1e-9,
                "t = {t}: {} vs {}",
                a_psi.amax(),
                expected.amax()
            );
        }
    }

    #[test]
    fn phi_iterates_converge_to_target() {
        for seed in [3u64, 8, 21] {
            let cov = BlockCov::new(random_pd(seed, 6), 2).unwrap();
            let target = target_coeffs(&cov).unwrap();
            let iterates = hat_iteration(&cov, 200).unwrap();
            let last = &iterates[200].0;
            assert!(
                (last - &target).amax() < 1e-10,
                "seed {seed}: gap {}",
                (last - &target).amax()
            );
        }
    }

    #[test]
    fn fixed_point_identity() {
        // alpha_phi + beta_phi alpha_psi + (beta_y . alpha_psi) gamma = gamma.
        for seed in [11u64, 12, 13] {
            let cov = BlockCov::new(random_pd(seed, 7), 3).unwrap();
            let stars = compute_stars(&cov).unwrap();
            let gamma = target_coeffs(&cov).unwrap();
            let m = stars.beta_y.dot(&stars.alpha_psi);
            let lhs = &stars.alpha_phi + &stars.beta_phi * &stars.alpha_psi + m * &gamma;
            assert!((&lhs - &gamma).amax() < 1e-10, "seed {seed}");
        }
    }

    #[test]
    fn target_hand_values() {
        let sigma = DMatrix::from_row_slice(3, 3, &[2.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
        let cov = BlockCov::new(sigma, 1).unwrap();
        let gamma = target_coeffs(&cov).unwrap();
        assert!((gamma[0] - 0.5).abs() < 1e-14);

        let zero_xy = DMatrix::from_row_slice(3, 3, &[2.0, 0.0, 0.0, 0.0, 1.0, 0.5, 0.0, 0.5, 1.0]);
        let cov = BlockCov::new(zero_xy, 1).unwrap();
        assert!(target_coeffs(&cov).unwrap().amax() < 1e-14);
    }

    #[test]
    fn csv_round_trip_and_errors() {
        use std::io::Write;
        let mut f = tempfile::NamedTempFile::new().unwrap();
        write!(f, "1.0,0.0,0.3\n0.0,1.0,0.5\n0.3,0.5,1.0\n").unwrap();
        let cov = BlockCov::from_csv(f.path(), 1).unwrap();
        assert_eq!(cov.dim(), 3);
        assert_eq!(cov.d_psi(), 1);
        assert!((cov.s_phiy()[0] - 0.3).abs() < 1e-15);

        let mut bad = tempfile::NamedTempFile::new().unwrap();
        write!(bad, "1.0,apple\n0.0,1.0\n").unwrap();
        assert!(BlockCov::from_csv(bad.path(), 1).is_err());
    }
}
