//! Seeded generators for the synthetic benchmarks.
//!
//! Two sources: the multi-environment structural causal model used by the
//! end-to-end pipeline tests, and a generic multivariate normal sampler for
//! covariance-specified data. Both are bit-reproducible: every run with the
//! same config and seed produces the identical dataset. Streams are keyed
//! by (seed, stream id) so the train and test splits are independent but
//! individually stable.
//!
//! The SCM: S has `d_s` iid standard normal coordinates, the target is
//! `Y = sum(S) + eps_Y`, and the spurious variable is `V = a_e * Y + eps_V`
//! where the mixing coefficient `a_e` depends on the environment and flips
//! sign between training and test. Features are `[S | V]`, so a regression
//! that leans on V transfers badly while the all-ones coefficient on S
//! transfers exactly.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::gaussian::BlockCov;

/// Configuration of the multi-environment structural model.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ScmConfig {
    /// Rows drawn per environment (each training environment and the test
    /// environment get this many).
    pub n_per_env: usize,
    /// Mixing coefficient of V on Y per training environment.
    pub alpha_v_train: Vec<f64>,
    /// Mixing coefficient in the test environment.
    pub alpha_v_test: f64,
    /// Standard deviation of the target noise.
    pub sigma_y: f64,
    /// Standard deviation of the spurious-variable noise.
    pub sigma_v: f64,
    /// Number of cause coordinates.
    pub d_s: usize,
    pub seed: u64,
}

impl Default for ScmConfig {
    fn default() -> Self {
        ScmConfig {
            n_per_env: 50_000,
            alpha_v_train: vec![1.25, 0.75],
            alpha_v_test: -1.0,
            sigma_y: 0.5,
            sigma_v: 0.1,
            d_s: 9,
            seed: 0,
        }
    }
}

impl ScmConfig {
    fn validate(&self) -> Result<()> {
        if self.n_per_env == 0 {
            return Err(Error::Validation("n_per_env must be positive".into()));
        }
        if self.alpha_v_train.is_empty() {
            return Err(Error::Validation("need at least one training environment".into()));
        }
        if !(self.sigma_y >= 0.0 && self.sigma_v >= 0.0) {
            return Err(Error::Validation("noise scales must be nonnegative".into()));
        }
        if self.d_s == 0 {
            return Err(Error::Validation("d_s must be positive".into()));
        }
        Ok(())
    }
}

/// Which side of the environment shift to draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Stream ids keep the splits on disjoint, individually reproducible
/// substreams of the same seed.
fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws the structural-model dataset for one split.
///
/// Train: `n_per_env` rows per training environment, concatenated in
/// environment order and labeled 0..E-1. Test: `n_per_env` rows with the
/// flipped coefficient and no labels. Feature order is s1..s{d_s}, v.
pub fn generate_scm(cfg: &ScmConfig, split: Split) -> Result<Dataset> {
    cfg.validate()?;
    let (alphas, stream): (Vec<f64>, u64) = match split {
        Split::Train => (cfg.alpha_v_train.clone(), 0),
        Split::Test => (vec![cfg.alpha_v_test], 1),
    };
    let mut rng = stream_rng(cfg.seed, stream);

    let n_total = cfg.n_per_env * alphas.len();
    let d = cfg.d_s + 1;
    let mut features = DMatrix::zeros(n_total, d);
    let mut targets = DVector::zeros(n_total);
    let mut envs = Vec::with_capacity(n_total);

    let mut row = 0;
    for (e, &a_e) in alphas.iter().enumerate() {
        for _ in 0..cfg.n_per_env {
            let mut y = 0.0;
            for j in 0..cfg.d_s {
                let s: f64 = StandardNormal.sample(&mut rng);
                features[(row, j)] = s;
                y += s;
            }
            let eps_y: f64 = StandardNormal.sample(&mut rng);
            y += cfg.sigma_y * eps_y;
            let eps_v: f64 = StandardNormal.sample(&mut rng);
            features[(row, cfg.d_s)] = a_e * y + cfg.sigma_v * eps_v;
            targets[row] = y;
            envs.push(e);
            row += 1;
        }
    }

    let mut names: Vec<String> = (1..=cfg.d_s).map(|j| format!("s{j}")).collect();
    names.push("v".to_string());
    let ds = Dataset::new(features, targets)?.with_names(names)?;
    match split {
        Split::Train => ds.with_envs(envs),
        Split::Test => Ok(ds),
    }
}

/// Draws `n` iid rows from a multivariate normal with the given block
/// covariance and mean. The last coordinate becomes the target; the
/// leading ones become features named phi1.., psi1...
pub fn generate_gaussian(cov: &BlockCov, mu: &DVector<f64>, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Validation("n must be positive".into()));
    }
    let k = cov.dim();
    if mu.len() != k {
        return Err(Error::DimensionMismatch(format!(
            "mean has {} coordinates, covariance has {}",
            mu.len(),
            k
        )));
    }
    let chol = Cholesky::new(cov.sigma().clone())
        .ok_or_else(|| Error::Numerical("covariance is not positive definite".into()))?;
    let l = chol.l();
    let mut rng = stream_rng(seed, 2);

    let d = k - 1;
    let mut features = DMatrix::zeros(n, d);
    let mut targets = DVector::zeros(n);
    let mut z = DVector::zeros(k);
    for i in 0..n {
        for zi in z.iter_mut() {
            *zi = StandardNormal.sample(&mut rng);
        }
        let x = &l * &z + mu;
        for j in 0..d {
            features[(i, j)] = x[j];
        }
        targets[i] = x[d];
    }
    let names: Vec<String> = (0..d)
        .map(|j| {
            if j < cov.d_phi() {
                format!("phi{}", j + 1)
            } else {
                format!("psi{}", j - cov.d_phi() + 1)
            }
        })
        .collect();
    Dataset::new(features, targets)?.with_names(names)
}
