//! `mcpl eval`: score a saved model on a dataset.

use crate::basis::{self, BasisChoice, FeatureMapChoice};
use crate::{CmdError, CmdResult};
use clap::Args;
use multicalib::{
    mc_error, mc_error_over_class, partition_from_values, post_processing_gap, rmse,
    round_predictions, ModelFile, PredictorKind, RunTrace,
};
use nalgebra::DVector;
use serde_json::json;
use std::path::PathBuf;

/// Directions sampled when reporting the class-level calibration error.
const CLASS_DIRECTIONS: usize = 64;

#[derive(Args)]
pub struct EvalArgs {
    /// Saved model JSON
    #[arg(long)]
    model: PathBuf,
    /// Dataset CSV; target column must be named `y`
    #[arg(long)]
    data: PathBuf,
    /// Environment column name (defaults to `env` when the basis needs one)
    #[arg(long)]
    env_col: Option<String>,
    /// Grouping basis to audit calibration against
    #[arg(long, value_enum)]
    basis: Option<BasisChoice>,
    /// Identification model for the jtt basis
    #[arg(long)]
    fid: Option<PathBuf>,
    /// Causal-block width for the raw_linear basis
    #[arg(long)]
    d_phi: Option<usize>,
    /// Feature expansion for the environment classifier
    #[arg(long, value_enum, default_value_t = FeatureMapChoice::Quadratic)]
    feature_map: FeatureMapChoice,
    /// Trace JSON from the producing run; echoes its certificate
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write the metrics JSON here as well as to stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn execute(args: EvalArgs) -> CmdResult {
    let model = ModelFile::load(&args.model)?.into_model()?;

    let data = crate::io::load_dataset(&args.data, args.env_col.as_deref())?;

    let preds = model.predict(data.features())?;
    let overall_rmse = rmse(&preds, data.targets())?;

    let per_env_rmse: Option<Vec<f64>> = data.envs().map(|_| {
        (0..data.n_envs())
            .map(|e| {
                let rows = data.env_rows(e);
                let p = DVector::from_iterator(rows.len(), rows.iter().map(|&i| preds[i]));
                let t =
                    DVector::from_iterator(rows.len(), rows.iter().map(|&i| data.targets()[i]));
                rmse(&p, &t).expect("same length by construction")
            })
            .collect()
    });

    // Level sets of the model output: grid bins for a linear model saved
    // with one, exact distinct values otherwise.
    let pred_vec: Vec<f64> = preds.iter().cloned().collect();
    let (rounded, partition) = match (&model.kind, &model.bin_spec) {
        (PredictorKind::Linear(_), Some(spec)) => round_predictions(&pred_vec, spec),
        _ => {
            let part = partition_from_values(&pred_vec)?;
            (pred_vec.clone(), part)
        }
    };
    let y: Vec<f64> = data.targets().iter().cloned().collect();
    let gap = post_processing_gap(&rounded, &y, &partition)?;

    let mut report = json!({
        "model": args.model,
        "data": args.data,
        "n": data.n(),
        "rmse": overall_rmse,
        "per_env_rmse": per_env_rmse,
        "n_level_sets": partition.n_bins(),
        "post_processing_gap": gap,
    });

    if let Some(choice) = args.basis {
        let grouping =
            basis::build(choice, &data, args.fid.as_ref(), args.d_phi, args.feature_map)?;
        let matrix = grouping.evaluate(&data)?;
        let mut per_column = Vec::new();
        let mut k1_max = 0.0f64;
        for j in 0..matrix.ncols() {
            let h: Vec<f64> = matrix.column(j).iter().cloned().collect();
            let col_report = mc_error(&h, &y, &partition)?;
            k1_max = k1_max.max(col_report.k1);
            per_column.push(json!({ "k2": col_report.k2, "k1": col_report.k1 }));
        }
        let b_sup = matrix.iter().map(|v| v * v).fold(0.0f64, f64::max);
        let k2_class = mc_error_over_class(&matrix, &y, &partition, b_sup, CLASS_DIRECTIONS, 0)?;
        report["basis"] = json!(choice.as_str());
        report["k2"] = json!(k2_class);
        report["k1"] = json!(k1_max);
        report["b_sup"] = json!(b_sup);
        report["per_column"] = json!(per_column);
    }

    if let Some(path) = &args.trace {
        let text = std::fs::read_to_string(path)?;
        let trace: RunTrace = serde_json::from_str(&text).map_err(|e| {
            CmdError::Lib(multicalib::Error::Validation(format!(
                "cannot parse trace {}: {e}",
                path.display()
            )))
        })?;
        report["certificate"] = json!(trace.certificate);
    }

    let pretty = serde_json::to_string_pretty(&report).expect("serializable report");
    if let Some(path) = &args.out {
        std::fs::write(path, &pretty)?;
    }
    println!("{pretty}");
    Ok(())
}
