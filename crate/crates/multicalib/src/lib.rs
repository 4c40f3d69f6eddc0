//! Post-processing predictors to be multicalibrated over grouping functions
//! that may look at both features and the predicted label.
//!
//! The core loop lives in [`pseudolabel`]: discretize a predictor, fit the
//! grouping class on each level set, refit against the resulting pseudolabels,
//! and repeat until the squared-error gap stops paying for another pass. On
//! stop, the trace carries a certificate bounding the calibration error of the
//! returned predictor over the whole grouping class.
//!
//! Supporting pieces:
//!
//! * [`metrics`] measures calibration error (`k2`/`k1`) and post-processing
//!   gaps for any grouping function.
//! * [`grouping`] builds the grouping classes themselves: environment
//!   posteriors, hard-sample weights, raw-feature residuals, or a constant.
//! * [`gaussian`] solves the population fixed point in closed form for
//!   jointly Gaussian features, giving the contraction rate the iteration
//!   obeys and the limit it converges to.
//! * [`synth`] generates structural-causal and Gaussian benchmark data with
//!   deterministic, stream-separated seeding.

pub mod config;
pub mod dataset;
pub mod discretize;
pub mod error;
pub mod gaussian;
pub mod grouping;
pub mod logistic;
pub mod metrics;
pub mod ols;
pub mod predictor;
pub mod pseudolabel;
pub mod synth;

pub use config::{RefitClass, RunConfig};
pub use dataset::Dataset;
pub use discretize::{choose_bins, partition_from_values, round_predictions, BinSpec, LevelPartition};
pub use error::{Error, Result};
pub use gaussian::{
    compute_m, compute_m_routes, compute_stars, hat_iteration, target_coeffs, BlockCov,
    RegressionStars,
};
pub use grouping::{build_env_basis, build_jtt_basis, BasisKind, GroupingBasis};
pub use logistic::{fit_env_classifier, EnvClassifier, FeatureMap};
pub use metrics::{mc_error, mc_error_over_class, post_processing_gap, rmse, McReport};
pub use ols::{ols_fit, OlsSolution};
pub use predictor::{LinearPredictor, Model, ModelFile, PredictorKind};
pub use pseudolabel::{certify, run, Certificate, RunTrace, StopReason};
pub use synth::{generate_gaussian, generate_scm, ScmConfig, Split};
