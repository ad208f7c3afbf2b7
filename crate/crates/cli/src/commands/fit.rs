//! `sib fit`: penalty search, K selection and the result bundle.

use std::path::PathBuf;

use serde::Serialize;
use sib_core::selection::{select_k, IcForm, IcLoss, KSelection, SearchSpace};
use sib_core::{BiclusterResult, FitConfig, LossWeights, StepRule};

use super::{require_path, Options};
use crate::bundle::{check_view_name, write_model, ModelMeta, ViewMeta};
use crate::config::Config;
use crate::dataset::{load_from_config, load_outcome, Dataset};
use crate::error::{CliError, Result};
use crate::io::write_json;

pub const KEYS: &[&str] = &[
    "view.*",
    "outcome",
    "outcome.family",
    "covariates",
    "k",
    "rho",
    "alpha",
    "tol",
    "max_iter",
    "step_rule",
    "non_overlapping",
    "outcome_refit",
    "lambda",
    "lambda.*",
    "lambda_delta",
    "shared_lambda",
    "use_ebic",
    "sigma_ebic",
    "ic_loss",
    "ic_form",
    "max_draws",
    "seed",
    "out",
];

pub const DEFAULT_DELTAS: [f64; 4] = [3.0, 4.0, 6.0, 8.0];

/// `3` or `2..6` (inclusive).
pub fn parse_k(text: &str) -> Result<(usize, usize)> {
    let bad = || CliError::Config(format!("k = {text:?}: expected a count such as 3 or a range such as 2..6"));
    let (lo, hi) = match text.split_once("..") {
        Some((a, b)) => (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?),
        None => {
            let k = text.trim().parse().map_err(|_| bad())?;
            (k, k)
        }
    };
    if lo == 0 || lo > hi {
        return Err(bad());
    }
    Ok((lo, hi))
}

pub fn parse_step_rule(text: &str) -> Result<StepRule> {
    match text {
        "block-lipschitz" => Ok(StepRule::BlockLipschitz),
        "fixed" => Ok(StepRule::Fixed),
        _ => Err(CliError::Config(format!("step_rule = {text:?}: expected block-lipschitz or fixed"))),
    }
}

/// Penalty grid per view from `lambda.<view>`, `lambda` or `lambda_delta`.
/// A delta grid maps to `delta * rho / (n * p_d)` for view `d`.
pub fn lambda_grid(config: &Config, data: &Dataset, rho: f64) -> Result<Vec<Vec<f64>>> {
    let shared: Option<Vec<f64>> = config.list("lambda")?;
    let deltas: Option<Vec<f64>> = config.list("lambda_delta")?;
    if shared.is_some() && deltas.is_some() {
        return Err(CliError::Config("set either lambda or lambda_delta, not both".into()));
    }
    let n = data.sample_ids.len() as f64;
    data.views
        .iter()
        .map(|view| {
            let grid = match config.list::<f64>(&format!("lambda.{}", view.name()))? {
                Some(g) => g,
                None => match (&shared, &deltas) {
                    (Some(g), _) => g.clone(),
                    (None, d) => {
                        let p = view.n_vars() as f64;
                        d.as_deref().unwrap_or(&DEFAULT_DELTAS).iter().map(|&d| d * rho / (n * p)).collect()
                    }
                },
            };
            if grid.is_empty() {
                return Err(CliError::Config(format!("empty penalty grid for view {:?}", view.name())));
            }
            Ok(grid)
        })
        .collect()
}

/// Base fit settings and search space described by a config.
pub fn settings(config: &Config, data: &Dataset, seed: u64) -> Result<(FitConfig, SearchSpace)> {
    let k_range = parse_k(config.get("k").unwrap_or("2..6"))?;
    let rho = config.value_or("rho", 0.5)?;
    let mut base = FitConfig::new(k_range.0, LossWeights::shared(rho, &vec![0.0; data.views.len()], k_range.0)?);
    base.alpha = config.value_or("alpha", base.alpha)?;
    base.tol = config.value_or("tol", base.tol)?;
    base.max_iter = config.value_or("max_iter", base.max_iter)?;
    if let Some(rule) = config.get("step_rule") {
        base.step_rule = parse_step_rule(rule)?;
    }
    base.non_overlapping = config.bool_or("non_overlapping", false)?;
    base.outcome_refit = config.bool_or("outcome_refit", true)?;
    base.seed = seed;
    base.validate()?;

    let mut space = SearchSpace::new(lambda_grid(config, data, rho)?, k_range);
    space.shared_lambda = config.bool_or("shared_lambda", true)?;
    space.use_ebic = config.bool_or("use_ebic", false)?;
    space.sigma_ebic = config.value_or("sigma_ebic", 0.0)?;
    space.max_draws = config.value_or("max_draws", space.max_draws)?;
    space.ic.loss = match config.get("ic_loss").unwrap_or("total-nll") {
        "total-nll" => IcLoss::TotalNll,
        "smooth-l0" => IcLoss::SmoothL0,
        other => return Err(CliError::Config(format!("ic_loss = {other:?}: expected total-nll or smooth-l0"))),
    };
    space.ic.form = match config.get("ic_form").unwrap_or("likelihood") {
        "likelihood" => IcForm::Likelihood,
        "log-loss" => IcForm::LogLoss,
        other => return Err(CliError::Config(format!("ic_form = {other:?}: expected likelihood or log-loss"))),
    };
    space.validate()?;
    Ok((base, space))
}

#[derive(Debug, Serialize)]
struct CandidateRow {
    draw: usize,
    lambdas: Vec<Vec<f64>>,
    score: Option<f64>,
    q: Option<usize>,
    loss: Option<f64>,
    guard_hit: Option<bool>,
    stop_reason: Option<String>,
    error: Option<String>,
}

#[derive(Debug, Serialize)]
struct KRow {
    k: usize,
    empty: bool,
    best_score: Option<f64>,
    error: Option<String>,
}

#[derive(Debug, Serialize)]
struct FitReport {
    k: usize,
    k_selection: &'static str,
    k_search: Vec<KRow>,
    rho: f64,
    lambdas: Vec<Vec<f64>>,
    stop_reason: String,
    converged: bool,
    iterations: usize,
    cluster_sizes: Vec<usize>,
    selected_variables: usize,
    separation_warning: bool,
    beta_hat: Vec<f64>,
    loss_trace: Vec<f64>,
    ic_table: Vec<CandidateRow>,
}

fn report(selection: &KSelection) -> FitReport {
    let chosen = selection.chosen();
    let result = &chosen.best_result;
    FitReport {
        k: selection.k_hat,
        k_selection: if selection.user_fixed { "user" } else { "search" },
        k_search: selection
            .per_k
            .iter()
            .map(|f| KRow {
                k: f.k,
                empty: f.empty,
                best_score: f.outcome.as_ref().ok().and_then(|o| o.table[o.best_draw].ic.map(|s| s.score)),
                error: f.outcome.as_ref().err().map(ToString::to_string),
            })
            .collect(),
        rho: chosen.best_config.weights.rho(),
        lambdas: chosen.best_config.weights.lambdas().to_vec(),
        stop_reason: result.stop_reason.to_string(),
        converged: result.converged,
        iterations: result.iterations,
        cluster_sizes: result.cluster_sizes(),
        selected_variables: result.selected_variables(),
        separation_warning: result.separation_warning,
        beta_hat: result.beta_hat.to_vec(),
        loss_trace: result.loss_trace.clone(),
        ic_table: chosen
            .table
            .iter()
            .map(|row| CandidateRow {
                draw: row.draw,
                lambdas: row.lambdas.clone(),
                score: row.ic.map(|s| s.score),
                q: row.ic.map(|s| s.q),
                loss: row.ic.map(|s| s.loss),
                guard_hit: row.ic.map(|s| s.guard_hit),
                stop_reason: row.stop_reason.map(|r| r.to_string()),
                error: row.error.clone(),
            })
            .collect(),
    }
}

/// What a finished fit produced.
#[derive(Debug, Clone)]
pub struct FitOutput {
    pub out_dir: PathBuf,
    pub k: usize,
    pub user_fixed: bool,
    pub result: BiclusterResult,
}

pub fn run(opts: &Options) -> Result<FitOutput> {
    let config = opts.load_config(true)?;
    config.check_keys(KEYS)?;
    let data = load_from_config(&config)?;
    for view in &data.views {
        check_view_name(view.name())?;
    }
    let outcome_path = require_path(&config, "outcome")?;
    let outcome_family = config
        .family("outcome.family")?
        .ok_or_else(|| CliError::Config("missing required key \"outcome.family\"".into()))?;
    let outcome = load_outcome(&outcome_path, outcome_family, &data)?;
    let seed = opts.seed(&config)?;
    let (base, space) = settings(&config, &data, seed)?;
    let out_dir = opts.out_dir(&config, "sib_fit");

    opts.note(format!(
        "fitting {} samples, {} views, K in {}..={}",
        data.sample_ids.len(),
        data.views.len(),
        space.k_range.0,
        space.k_range.1
    ));
    let selection = select_k(&data.views, &outcome, &base, &space)?;
    let chosen = selection.chosen();
    let result = &chosen.best_result;
    let meta = ModelMeta {
        views: data
            .views
            .iter()
            .zip(&data.variable_names)
            .map(|(v, names)| ViewMeta { name: v.name().to_string(), family: v.family(), variables: names.clone() })
            .collect(),
        outcome_family,
        covariates: data.covariate_names.clone(),
        k: selection.k_hat,
        non_overlapping: base.non_overlapping,
        stop_reason: result.stop_reason,
        rho: base.weights.rho(),
        alpha: base.alpha,
        tol: base.tol,
        max_iter: base.max_iter,
        step_rule: base.step_rule,
    };
    write_model(&out_dir, &data, result, &meta)?;
    write_json(&out_dir.join("fit_report.json"), &report(&selection))?;
    opts.note(format!(
        "K = {} ({}), stop: {}, sizes {:?}; wrote {}",
        selection.k_hat,
        if selection.user_fixed { "user" } else { "search" },
        result.stop_reason,
        result.cluster_sizes(),
        out_dir.display()
    ));
    Ok(FitOutput { out_dir, k: selection.k_hat, user_fixed: selection.user_fixed, result: result.clone() })
}
