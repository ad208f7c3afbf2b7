//! `sib predict`: assignments and outcome predictions for new samples.

use std::path::PathBuf;

use serde::Serialize;
use sib_core::metrics::outcome_error;
use sib_core::{predict, Family, PredictConfig, PredictionResult};

use super::Options;
use crate::bundle::{read_model, SavedModel};
use crate::config::Config;
use crate::dataset::{load_from_config, Dataset};
use crate::error::{CliError, Result};
use crate::io::{format_float, read_vector, write_json, write_records};

pub const KEYS: &[&str] = &[
    "model",
    "view.*",
    "covariates",
    "truth",
    "predict.alpha",
    "predict.tol",
    "predict.max_iter",
    "predict.threshold",
    "out",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictMetrics {
    pub family: Family,
    /// `mse` for Gaussian and Poisson outcomes, `error_rate` for binary ones.
    pub metric: &'static str,
    pub value: f64,
    pub n: usize,
}

#[derive(Debug, Clone)]
pub struct PredictOutput {
    pub out_dir: PathBuf,
    pub prediction: PredictionResult,
    pub metrics: Option<PredictMetrics>,
}

fn check_against_model(data: &Dataset, model: &SavedModel) -> Result<()> {
    let views = &model.meta.views;
    if data.views.len() != views.len() {
        return Err(CliError::Data(format!("model has {} views, config declares {}", views.len(), data.views.len())));
    }
    for ((view, names), meta) in data.views.iter().zip(&data.variable_names).zip(views) {
        if view.name() != meta.name || view.family() != meta.family {
            return Err(CliError::Data(format!(
                "view {:?} ({}) does not match model view {:?} ({})",
                view.name(),
                view.family(),
                meta.name,
                meta.family
            )));
        }
        if *names != meta.variables {
            return Err(CliError::Data(format!("view {:?}: variables differ from the fitted model", view.name())));
        }
    }
    if data.covariate_names != model.meta.covariates {
        return Err(CliError::Data(format!(
            "covariates {:?} differ from the fitted model's {:?}",
            data.covariate_names, model.meta.covariates
        )));
    }
    Ok(())
}

fn predict_config(config: &Config, model: &SavedModel) -> Result<PredictConfig> {
    let meta = &model.meta;
    let defaults = PredictConfig {
        alpha: meta.alpha,
        tol: meta.tol,
        max_iter: meta.max_iter,
        step_rule: meta.step_rule,
        ..PredictConfig::default()
    };
    Ok(PredictConfig {
        alpha: config.value_or("predict.alpha", defaults.alpha)?,
        tol: config.value_or("predict.tol", defaults.tol)?,
        max_iter: config.value_or("predict.max_iter", defaults.max_iter)?,
        threshold: config.value_or("predict.threshold", defaults.threshold)?,
        ..defaults
    })
}

pub fn run(opts: &Options, model_dir: Option<PathBuf>) -> Result<PredictOutput> {
    let config = opts.load_config(true)?;
    config.check_keys(KEYS)?;
    let model_dir = model_dir
        .or_else(|| config.path("model"))
        .ok_or_else(|| CliError::Config("no model directory (use --model or the model key)".into()))?;
    let model = read_model(&model_dir)?;
    let data = load_from_config(&config)?;
    check_against_model(&data, &model)?;
    let pconfig = predict_config(&config, &model)?;
    let out_dir = opts.out_dir(&config, "sib_predict");

    let prediction = predict(&data.views, &model.result, data.covariates.as_ref(), &pconfig)?;
    crate::io::ensure_dir(&out_dir)?;
    let header: Vec<String> = ["sample_id", "bicluster", "psi_y_hat", "y_hat"].iter().map(|s| s.to_string()).collect();
    let rows: Vec<Vec<String>> = data
        .sample_ids
        .iter()
        .enumerate()
        .map(|(i, id)| {
            vec![
                id.clone(),
                (prediction.assignments[i] + 1).to_string(),
                format_float(prediction.psi_y_hat[i]),
                format_float(prediction.y_hat[i]),
            ]
        })
        .collect();
    write_records(&out_dir.join("predictions.csv"), &header, &rows)?;

    let metrics = match config.path("truth") {
        Some(path) => {
            let (ids, y) = read_vector(&path)?;
            if ids != data.sample_ids {
                return Err(CliError::Data(format!("{}: sample identifiers differ from the views", path.display())));
            }
            let family = model.meta.outcome_family;
            let metrics = PredictMetrics {
                family,
                metric: if family == Family::Bernoulli { "error_rate" } else { "mse" },
                value: outcome_error(&y, &prediction.y_hat, family)?,
                n: y.len(),
            };
            write_json(&out_dir.join("metrics.json"), &metrics)?;
            Some(metrics)
        }
        None => None,
    };
    opts.note(format!(
        "predicted {} samples ({} iterations{}); wrote {}",
        data.sample_ids.len(),
        prediction.iterations,
        metrics.as_ref().map(|m| format!(", {} {:.4}", m.metric, m.value)).unwrap_or_default(),
        out_dir.display()
    ));
    Ok(PredictOutput { out_dir, prediction, metrics })
}
