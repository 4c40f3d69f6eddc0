//! `mcpl gen`: write synthetic datasets to disk.

use crate::keyval::{self, parse_as, parse_f64_list};
use crate::{CmdError, CmdResult};
use clap::{Args, Subcommand};
use multicalib::{generate_gaussian, generate_scm, BlockCov, Error, ScmConfig, Split};
use nalgebra::DVector;
use std::path::PathBuf;

#[derive(Subcommand)]
pub enum GenTarget {
    /// Structural-causal benchmark with environment-shifted mixing
    Scm(ScmArgs),
    /// Joint-Gaussian draws from a covariance CSV (label is the last coordinate)
    Gaussian(GaussianArgs),
}

#[derive(Args)]
pub struct ScmArgs {
    /// Plain-text `key = value` config; flags override file values
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Samples per environment (train has one environment per coefficient)
    #[arg(long)]
    n_per_env: Option<usize>,
    /// Comma-separated training mixing coefficients, one per environment
    #[arg(long)]
    alpha_train: Option<String>,
    /// Test-split mixing coefficient
    #[arg(long)]
    alpha_test: Option<f64>,
    #[arg(long)]
    sigma_y: Option<f64>,
    #[arg(long)]
    sigma_v: Option<f64>,
    /// Number of causal features
    #[arg(long)]
    d_s: Option<usize>,
    /// Output directory, receives train.csv, test.csv, gen_meta.json
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
pub struct GaussianArgs {
    /// Headerless covariance CSV; last row/column is the label
    #[arg(long)]
    sigma: PathBuf,
    /// Width of the leading (causal) feature block; default all but one feature
    #[arg(long)]
    d_phi: Option<usize>,
    #[arg(long, default_value_t = 100_000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated mean vector; default zero
    #[arg(long)]
    mean: Option<String>,
    /// Output CSV path
    #[arg(long, default_value = "gaussian.csv")]
    out: PathBuf,
}

pub fn execute(target: GenTarget) -> CmdResult {
    match target {
        GenTarget::Scm(args) => gen_scm(args),
        GenTarget::Gaussian(args) => gen_gaussian(args),
    }
}

fn gen_scm(args: ScmArgs) -> CmdResult {
    let mut cfg = ScmConfig::default();
    if let Some(path) = &args.config {
        for (key, value) in keyval::parse_file(path)? {
            match key.as_str() {
                "seed" => cfg.seed = parse_as(&key, &value)?,
                "n_per_env" => cfg.n_per_env = parse_as(&key, &value)?,
                "alpha_v_train" => cfg.alpha_v_train = parse_f64_list(&key, &value)?,
                "alpha_v_test" => cfg.alpha_v_test = parse_as(&key, &value)?,
                "sigma_y" => cfg.sigma_y = parse_as(&key, &value)?,
                "sigma_v" => cfg.sigma_v = parse_as(&key, &value)?,
                "d_s" => cfg.d_s = parse_as(&key, &value)?,
                other => {
                    return Err(CmdError::Lib(Error::Validation(format!(
                        "unknown config key `{other}`"
                    ))))
                }
            }
        }
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.n_per_env {
        cfg.n_per_env = v;
    }
    if let Some(list) = &args.alpha_train {
        cfg.alpha_v_train = parse_f64_list("alpha_train", list)?;
    }
    if let Some(v) = args.alpha_test {
        cfg.alpha_v_test = v;
    }
    if let Some(v) = args.sigma_y {
        cfg.sigma_y = v;
    }
    if let Some(v) = args.sigma_v {
        cfg.sigma_v = v;
    }
    if let Some(v) = args.d_s {
        cfg.d_s = v;
    }

    let train = generate_scm(&cfg, Split::Train)?;
    let test = generate_scm(&cfg, Split::Test)?;
    std::fs::create_dir_all(&args.out)?;
    train.to_csv(args.out.join("train.csv"))?;
    test.to_csv(args.out.join("test.csv"))?;

    let meta = serde_json::json!({ "command": "gen scm", "config": cfg });
    std::fs::write(
        args.out.join("gen_meta.json"),
        serde_json::to_string_pretty(&meta).expect("serializable meta"),
    )?;
    println!("{}", serde_json::json!({
        "train": args.out.join("train.csv"),
        "test": args.out.join("test.csv"),
        "n_train": train.n(),
        "n_test": test.n(),
    }));
    Ok(())
}

fn gen_gaussian(args: GaussianArgs) -> CmdResult {
    let d_phi = match args.d_phi {
        Some(v) => v,
        None => default_d_phi(&args.sigma)?,
    };
    let cov = BlockCov::from_csv(&args.sigma, d_phi)?;
    let mean = match &args.mean {
        Some(list) => {
            let values = parse_f64_list("mean", list)?;
            if values.len() != cov.dim() {
                return Err(CmdError::Lib(Error::DimensionMismatch(format!(
                    "mean has {} entries, covariance is {}x{}",
                    values.len(),
                    cov.dim(),
                    cov.dim()
                ))));
            }
            DVector::from_vec(values)
        }
        None => DVector::zeros(cov.dim()),
    };
    let data = generate_gaussian(&cov, &mean, args.n, args.seed)?;
    data.to_csv(&args.out)?;
    println!("{}", serde_json::json!({ "out": args.out, "n": data.n(), "d": data.d() }));
    Ok(())
}

/// All but one feature goes to the causal block when --d-phi is omitted.
fn default_d_phi(sigma: &PathBuf) -> Result<usize, CmdError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_path(sigma)?;
    let mut records = reader.records();
    let first = records
        .next()
        .ok_or_else(|| CmdError::Lib(Error::Validation("empty covariance file".into())))?
        .map_err(|e| CmdError::Lib(Error::Csv(e)))?;
    let dim = first.len();
    if dim < 3 {
        return Err(CmdError::Lib(Error::Validation(format!(
            "covariance must be at least 3x3, found {dim} columns"
        ))));
    }
    Ok(dim - 2)
}
