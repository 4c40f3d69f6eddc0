//! `mcpl run`: train with the pseudolabel loop, write model and trace.

use crate::basis::{self, BasisChoice, FeatureMapChoice};
use crate::keyval::{self, parse_as};
use crate::{CmdError, CmdResult};
use clap::{Args, ValueEnum};
use multicalib::{ols_fit, Error, LinearPredictor, ModelFile, RefitClass, RunConfig};
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RefitChoice {
    Linear,
    #[value(alias = "bin_table")]
    BinTable,
}

impl From<RefitChoice> for RefitClass {
    fn from(c: RefitChoice) -> RefitClass {
        match c {
            RefitChoice::Linear => RefitClass::Linear,
            RefitChoice::BinTable => RefitClass::BinTable,
        }
    }
}

#[derive(Args)]
pub struct RunArgs {
    /// Training CSV; target column must be named `y`
    #[arg(long)]
    train: PathBuf,
    /// Grouping basis fitted on each level set
    #[arg(long, value_enum)]
    basis: BasisChoice,
    /// Environment column name (defaults to `env` when the basis needs one)
    #[arg(long)]
    env_col: Option<String>,
    /// Identification model for the jtt basis
    #[arg(long)]
    fid: Option<PathBuf>,
    /// Initial predictor; trained by least squares when omitted
    #[arg(long)]
    f0: Option<PathBuf>,
    /// Causal-block width for the raw_linear basis
    #[arg(long)]
    d_phi: Option<usize>,
    /// Feature expansion for the environment classifier
    #[arg(long, value_enum, default_value_t = FeatureMapChoice::Quadratic)]
    feature_map: FeatureMapChoice,
    /// Plain-text `key = value` config; flags override file values
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Gap threshold; data-dependent default when omitted
    #[arg(long)]
    stop_epsilon: Option<f64>,
    /// Keep iterating until the gap itself is below the threshold
    #[arg(long)]
    strict_stopping: bool,
    /// Ridge penalty for the per-level-set fits
    #[arg(long)]
    ridge_lambda: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Skip the discretization step (exact-value level sets instead)
    #[arg(long)]
    no_discretize: bool,
    #[arg(long)]
    min_bins: Option<usize>,
    #[arg(long)]
    min_bin_count: Option<usize>,
    #[arg(long)]
    coverage_fraction: Option<f64>,
    /// Function class for the refit step
    #[arg(long, value_enum)]
    refit: Option<RefitChoice>,
    /// Output directory, receives model.json, trace.json, trace.csv
    #[arg(long)]
    out: PathBuf,
}

fn config_from(args: &RunArgs) -> Result<RunConfig, CmdError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &args.config {
        for (key, value) in keyval::parse_file(path)? {
            match key.as_str() {
                "max_iters" => cfg.max_iters = parse_as(&key, &value)?,
                "stop_epsilon" => cfg.stop_epsilon = Some(parse_as(&key, &value)?),
                "strict_stopping" => cfg.strict_stopping = parse_as(&key, &value)?,
                "ridge_lambda" => cfg.ridge_lambda = parse_as(&key, &value)?,
                "seed" => cfg.seed = parse_as(&key, &value)?,
                "discretize" => cfg.discretize = parse_as(&key, &value)?,
                "min_bins" => cfg.min_bins = parse_as(&key, &value)?,
                "min_bin_count" => cfg.min_bin_count = parse_as(&key, &value)?,
                "coverage_fraction" => cfg.coverage_fraction = parse_as(&key, &value)?,
                "refit" => {
                    cfg.refit = match value.as_str() {
                        "linear" => RefitClass::Linear,
                        "bin_table" => RefitClass::BinTable,
                        other => {
                            return Err(CmdError::Lib(Error::Validation(format!(
                                "config key `refit`: expected linear or bin_table, got `{other}`"
                            ))))
                        }
                    }
                }
                other => {
                    return Err(CmdError::Lib(Error::Validation(format!(
                        "unknown config key `{other}`"
                    ))))
                }
            }
        }
    }
    if let Some(v) = args.max_iters {
        cfg.max_iters = v;
    }
    if let Some(v) = args.stop_epsilon {
        cfg.stop_epsilon = Some(v);
    }
    if args.strict_stopping {
        cfg.strict_stopping = true;
    }
    if let Some(v) = args.ridge_lambda {
        cfg.ridge_lambda = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if args.no_discretize {
        cfg.discretize = false;
    }
    if let Some(v) = args.min_bins {
        cfg.min_bins = v;
    }
    if let Some(v) = args.min_bin_count {
        cfg.min_bin_count = v;
    }
    if let Some(v) = args.coverage_fraction {
        cfg.coverage_fraction = v;
    }
    if let Some(v) = args.refit {
        cfg.refit = v.into();
    }
    Ok(cfg)
}

pub fn execute(args: RunArgs) -> CmdResult {
    let cfg = config_from(&args)?;

    let data = crate::io::load_dataset(&args.train, args.env_col.as_deref())?;

    let f0 = match &args.f0 {
        Some(path) => basis::load_linear(path, "--f0 model")?,
        None => {
            let solution = ols_fit(data.features(), data.targets(), 0.0)?;
            LinearPredictor::from_ols(&solution)
        }
    };

    let grouping = basis::build(args.basis, &data, args.fid.as_ref(), args.d_phi, args.feature_map)?;
    let (model, trace) = multicalib::run(&data, &grouping, &f0, &cfg)?;

    std::fs::create_dir_all(&args.out)?;
    let model_path = args.out.join("model.json");
    let trace_path = args.out.join("trace.json");
    let csv_path = args.out.join("trace.csv");
    ModelFile::from_model(&model).save(&model_path)?;
    trace.save_json(&trace_path)?;
    trace.write_csv(&csv_path)?;

    println!("{}", serde_json::json!({
        "model": model_path,
        "trace": trace_path,
        "trace_csv": csv_path,
        "basis": args.basis.as_str(),
        "stop_reason": trace.stop_reason,
        "iterations": trace.iterations.len(),
        "final_gap": trace.final_gap(),
    }));
    Ok(())
}
