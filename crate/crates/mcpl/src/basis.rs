//! Shared grouping-basis selection for `run` and `eval`.

use crate::CmdError;
use clap::ValueEnum;
use multicalib::{
    fit_env_classifier, Dataset, Error, FeatureMap, GroupingBasis, ModelFile, PredictorKind,
};
use std::path::{Path, PathBuf};

/// Grouping classes selectable on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BasisChoice {
    /// Environment-posterior columns from a multinomial classifier on (x, y)
    Env,
    /// The single constant function (plain recalibration)
    Constant,
    /// Squared residual of an identification model, plus a constant
    Jtt,
    /// Residuals of the non-causal block given the causal block and the label
    RawLinear,
}

impl BasisChoice {
    pub fn as_str(self) -> &'static str {
        match self {
            BasisChoice::Env => "env",
            BasisChoice::Constant => "constant",
            BasisChoice::Jtt => "jtt",
            BasisChoice::RawLinear => "raw_linear",
        }
    }
}

/// Classifier feature expansion selectable on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FeatureMapChoice {
    Linear,
    Quadratic,
}

impl From<FeatureMapChoice> for FeatureMap {
    fn from(c: FeatureMapChoice) -> FeatureMap {
        match c {
            FeatureMapChoice::Linear => FeatureMap::Linear,
            FeatureMapChoice::Quadratic => FeatureMap::Quadratic,
        }
    }
}

// Environment-classifier training budget. Exposed knobs stop at the feature
// map; these stay fixed so runs are comparable across datasets.
const CLS_MAX_ITERS: usize = 400;
const CLS_TOL: f64 = 1e-5;
const CLS_L2: f64 = 1e-6;

pub fn load_linear(path: &Path, what: &str) -> Result<multicalib::LinearPredictor, CmdError> {
    let model = ModelFile::load(path)?.into_model()?;
    match model.kind {
        PredictorKind::Linear(p) => Ok(p),
        PredictorKind::BinTable { .. } => Err(CmdError::Lib(Error::Validation(format!(
            "{what} must be a linear model, {} holds a bin table",
            path.display()
        )))),
    }
}

/// Builds the requested basis, fitting the environment classifier when the
/// choice calls for one.
pub fn build(
    choice: BasisChoice,
    data: &Dataset,
    fid: Option<&PathBuf>,
    d_phi: Option<usize>,
    feature_map: FeatureMapChoice,
) -> Result<GroupingBasis, CmdError> {
    match choice {
        BasisChoice::Constant => Ok(GroupingBasis::constant()),
        BasisChoice::Env => {
            if data.envs().is_none() {
                return Err(CmdError::Lib(Error::Validation(
                    "environment basis needs an environment column".into(),
                )));
            }
            let classifier =
                fit_env_classifier(data, feature_map.into(), CLS_MAX_ITERS, CLS_TOL, CLS_L2)?;
            Ok(GroupingBasis::environment(classifier))
        }
        BasisChoice::Jtt => {
            let path = fid.ok_or_else(|| {
                CmdError::Usage("--basis jtt requires --fid <model.json>".into())
            })?;
            Ok(GroupingBasis::hard_sample(load_linear(path, "--fid model")?))
        }
        BasisChoice::RawLinear => {
            let d_phi = d_phi.ok_or_else(|| {
                CmdError::Usage("--basis raw_linear requires --d-phi <columns>".into())
            })?;
            Ok(GroupingBasis::raw_linear_from_sample(data, d_phi)?)
        }
    }
}
