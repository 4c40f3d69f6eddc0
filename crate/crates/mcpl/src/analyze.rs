//! `mcpl analyze`: closed-form Gaussian fixed point for a covariance file.

use crate::{CmdError, CmdResult};
use clap::Args;
use multicalib::{
    compute_m, compute_m_routes, generate_gaussian, ols_fit, target_coeffs, BlockCov,
    GroupingBasis, LinearPredictor, PredictorKind, RunConfig,
};
use nalgebra::DVector;
use serde_json::json;
use std::path::PathBuf;

/// Rates this close to 1 mean the non-causal block barely adds noise and
/// the iteration will crawl; worth a loud warning.
const NEAR_SINGULAR_RATE: f64 = 0.99;

#[derive(Args)]
pub struct AnalyzeArgs {
    /// Headerless covariance CSV; last row/column is the label
    #[arg(long)]
    sigma: PathBuf,
    /// Width of the leading (causal) feature block
    #[arg(long)]
    d_phi: usize,
    /// Iterations tabulated for the population recurrence
    #[arg(long, default_value_t = 100)]
    t_max: usize,
    /// Also sample data, run the pipeline, and compare coefficients
    #[arg(long)]
    compare: bool,
    /// Sample size for --compare
    #[arg(long, default_value_t = 200_000)]
    n: usize,
    /// Seed for --compare
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the hat-iteration table as CSV
    #[arg(long)]
    table_csv: Option<PathBuf>,
    /// Write the analysis JSON here as well as to stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn execute(args: AnalyzeArgs) -> CmdResult {
    let cov = BlockCov::from_csv(&args.sigma, args.d_phi)?;
    let (m_product, m_schur) = compute_m_routes(&cov)?;
    let m = compute_m(&cov)?;
    let gamma = target_coeffs(&cov)?;
    let iterates = multicalib::hat_iteration(&cov, args.t_max)?;

    let mut table = Vec::with_capacity(iterates.len());
    let mut prev_psi_norm: Option<f64> = None;
    for (t, (a_phi, a_psi)) in iterates.iter().enumerate() {
        let phi_gap = (a_phi - &gamma).amax();
        let psi_norm = a_psi.norm();
        let psi_ratio = prev_psi_norm
            .filter(|&p| p > f64::MIN_POSITIVE)
            .map(|p| psi_norm / p);
        table.push(json!({
            "t": t,
            "phi_gap": phi_gap,
            "psi_norm": psi_norm,
            "psi_ratio": psi_ratio,
        }));
        prev_psi_norm = Some(psi_norm);
    }

    let mut report = json!({
        "sigma": args.sigma,
        "d_phi": args.d_phi,
        "t_max": args.t_max,
        "m": m,
        "m_routes": { "product": m_product, "schur": m_schur },
        "gamma_phi": gamma.iter().cloned().collect::<Vec<f64>>(),
        "iterations": table,
    });
    if m >= NEAR_SINGULAR_RATE {
        let warning = format!(
            "contraction rate {m:.6} is close to 1; convergence will be slow and \
             sample estimates unstable"
        );
        eprintln!("warning: {warning}");
        report["warning"] = json!(warning);
    }

    if let Some(path) = &args.table_csv {
        write_table_csv(path, &cov, &gamma, &iterates)?;
    }

    if args.compare {
        report["compare"] = compare(&cov, &gamma, args.n, args.seed)?;
    }

    let pretty = serde_json::to_string_pretty(&report).expect("serializable report");
    if let Some(path) = &args.out {
        std::fs::write(path, &pretty)?;
    }
    println!("{pretty}");
    Ok(())
}

fn write_table_csv(
    path: &PathBuf,
    cov: &BlockCov,
    gamma: &DVector<f64>,
    iterates: &[(DVector<f64>, DVector<f64>)],
) -> CmdResult {
    let mut writer = csv::Writer::from_path(path).map_err(multicalib::Error::Csv)?;
    let mut header = vec!["t".to_string()];
    for j in 0..cov.d_phi() {
        header.push(format!("a_phi{}", j + 1));
    }
    for j in 0..cov.d_psi() {
        header.push(format!("a_psi{}", j + 1));
    }
    header.push("phi_gap".to_string());
    header.push("psi_norm".to_string());
    writer.write_record(&header).map_err(multicalib::Error::Csv)?;
    for (t, (a_phi, a_psi)) in iterates.iter().enumerate() {
        let mut record = vec![t.to_string()];
        record.extend(a_phi.iter().map(|v| format!("{v}")));
        record.extend(a_psi.iter().map(|v| format!("{v}")));
        record.push(format!("{}", (a_phi - gamma).amax()));
        record.push(format!("{}", a_psi.norm()));
        writer.write_record(&record).map_err(multicalib::Error::Csv)?;
    }
    writer.flush().map_err(|e| CmdError::Lib(multicalib::Error::Io(e)))?;
    Ok(())
}

/// Samples from the covariance, runs the pipeline with the residual basis,
/// and reports how far the learned coefficients sit from the closed form.
fn compare(
    cov: &BlockCov,
    gamma: &DVector<f64>,
    n: usize,
    seed: u64,
) -> Result<serde_json::Value, CmdError> {
    let data = generate_gaussian(cov, &DVector::zeros(cov.dim()), n, seed)?;
    let solution = ols_fit(data.features(), data.targets(), 0.0)?;
    let f0 = LinearPredictor::from_ols(&solution);
    let grouping = GroupingBasis::raw_linear_from_sample(&data, cov.d_phi())?;
    let cfg = RunConfig { seed, ..RunConfig::default() };
    let (model, trace) = multicalib::run(&data, &grouping, &f0, &cfg)?;

    let final_pred = match &model.kind {
        PredictorKind::Linear(p) => p.clone(),
        PredictorKind::BinTable { .. } => {
            return Err(CmdError::Lib(multicalib::Error::Validation(
                "comparison needs the linear refit class".into(),
            )))
        }
    };
    // Closed-form limit: gamma on the causal block, zero on the rest and
    // on the intercept (sampling is mean-zero).
    let mut max_dev = final_pred.intercept.abs();
    for j in 0..cov.d_phi() {
        max_dev = max_dev.max((final_pred.coeffs[j] - gamma[j]).abs());
    }
    for j in cov.d_phi()..final_pred.d() {
        max_dev = max_dev.max(final_pred.coeffs[j].abs());
    }
    Ok(json!({
        "n": n,
        "seed": seed,
        "iterations": trace.iterations.len(),
        "stop_reason": trace.stop_reason,
        "max_coeff_deviation": max_dev,
        "coeffs": final_pred.coeffs.iter().cloned().collect::<Vec<f64>>(),
        "intercept": final_pred.intercept,
    }))
}
