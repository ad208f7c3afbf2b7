//! `sib reproduce`: repeated simulate, fit, predict and evaluate cycles on a
//! named setting, summarized as one table row per statistic.
//!
//! Settings are `g<n>x<p>` (Gaussian outcome) or `b<n>x<p>` (binary outcome),
//! e.g. `g150x100`, `g150x500`, `g500x1000`, `b150x100`, `b150x500`,
//! `b500x1000`.

use std::fmt::Write as _;
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use sib_core::expfam::mean_link;
use sib_core::metrics::{fp_fn, memberships, outcome_error, relevance_recovery_f};
use sib_core::model::natural_param_outcome;
use sib_core::selection::{random_search, select_k, SearchSpace};
use sib_core::simgen::{generate, SimConfig};
use sib_core::{predict, BiclusterResult, Family, FitConfig, LossWeights, ModelParams, PredictConfig};

use super::Options;
use crate::error::{CliError, Result};
use crate::io::{ensure_dir, format_float, write_records};

pub const KEYS: &[&str] =
    &["setting", "reps", "seed", "out", "k", "rho", "lambda_delta", "predict.tol", "predict.max_iter"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Setting {
    pub family: Family,
    pub n: usize,
    pub p: usize,
}

impl Setting {
    pub fn parse(text: &str) -> Result<Self> {
        let bad = || CliError::Config(format!("setting {text:?}: expected g<n>x<p> or b<n>x<p>, e.g. g150x100"));
        let family = match text.chars().next() {
            Some('g') => Family::Gaussian,
            Some('b') => Family::Bernoulli,
            _ => return Err(bad()),
        };
        let (n, p) = text[1..].split_once('x').ok_or_else(bad)?;
        let n: usize = n.parse().map_err(|_| bad())?;
        let p: usize = p.parse().map_err(|_| bad())?;
        Ok(Self { family, n, p })
    }

    pub fn name(&self) -> String {
        let tag = if self.family == Family::Bernoulli { 'b' } else { 'g' };
        format!("{tag}{}x{}", self.n, self.p)
    }
}

/// Fitting and prediction settings shared by every replication.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Protocol {
    pub rho: f64,
    /// Penalties are `delta * rho / (n * p)` for each delta.
    pub deltas: Vec<f64>,
    /// Inclusive K range; a single value fixes K.
    pub k_range: (usize, usize),
    pub predict_tol: f64,
    pub predict_max_iter: usize,
}

impl Default for Protocol {
    fn default() -> Self {
        Self { rho: 0.99, deltas: vec![3.0, 4.0, 6.0, 8.0], k_range: (3, 3), predict_tol: 1e-8, predict_max_iter: 20_000 }
    }
}

impl Protocol {
    pub fn search_space(&self, n: usize, p: &[usize]) -> SearchSpace {
        let grid = p.iter().map(|&pd| self.deltas.iter().map(|d| d * self.rho / (n * pd) as f64).collect()).collect();
        SearchSpace::new(grid, self.k_range)
    }

    pub fn base_config(&self, n_views: usize, seed: u64) -> Result<FitConfig> {
        let k = self.k_range.0;
        let mut base = FitConfig::new(k, LossWeights::shared(self.rho, &vec![0.0; n_views], k)?);
        base.non_overlapping = true;
        base.seed = seed;
        Ok(base)
    }
}

/// Statistics of one replication.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Replicate {
    pub rep: usize,
    pub seed: u64,
    pub k: usize,
    pub relevance: f64,
    pub recovery: f64,
    pub f_score: f64,
    pub false_positive: f64,
    pub false_negative: f64,
    pub train_error: f64,
    pub test_error: f64,
    pub test_f_score: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub setting: Setting,
    pub protocol: Protocol,
    pub seed: u64,
    pub replicates: Vec<Replicate>,
}

const STATS: [&str; 9] =
    ["relevance", "recovery", "f_score", "false_positive", "false_negative", "train", "test", "test_f_score", "k"];

impl Summary {
    fn values(&self, stat: &str) -> Vec<f64> {
        self.replicates
            .iter()
            .map(|r| match stat {
                "relevance" => r.relevance,
                "recovery" => r.recovery,
                "f_score" => r.f_score,
                "false_positive" => r.false_positive,
                "false_negative" => r.false_negative,
                "train" => r.train_error,
                "test" => r.test_error,
                "test_f_score" => r.test_f_score,
                _ => r.k as f64,
            })
            .collect()
    }

    pub fn mean(&self, stat: &str) -> f64 {
        let v = self.values(stat);
        v.iter().sum::<f64>() / v.len() as f64
    }

    pub fn sd(&self, stat: &str) -> f64 {
        let v = self.values(stat);
        if v.len() < 2 {
            return 0.0;
        }
        let m = self.mean(stat);
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
    }

    pub fn metric_name(&self) -> &'static str {
        if self.setting.family == Family::Bernoulli {
            "error_rate"
        } else {
            "mse"
        }
    }

    /// Mean and standard deviation rows, six decimals.
    pub fn table(&self) -> String {
        let metric = self.metric_name();
        let mut out = String::from("setting,stat,n,p,reps");
        for s in STATS {
            match s {
                "train" | "test" => write!(out, ",{metric}_{s}").expect("string write"),
                _ => write!(out, ",{s}").expect("string write"),
            }
        }
        out.push('\n');
        for (label, f) in [("mean", Self::mean as fn(&Self, &str) -> f64), ("sd", Self::sd)] {
            write!(out, "{},{label},{},{},{}", self.setting.name(), self.setting.n, self.setting.p, self.replicates.len())
                .expect("string write");
            for s in STATS {
                write!(out, ",{:.6}", f(self, s)).expect("string write");
            }
            out.push('\n');
        }
        out
    }
}

/// Independent stream `stream` derived from `seed`.
pub fn child_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fitted_means(result: &BiclusterResult, outcome: &sib_core::OutcomeSpec) -> Result<ndarray::Array1<f64>> {
    let params = ModelParams { beta: result.beta_hat.clone(), ..result.params.clone() };
    let psi = natural_param_outcome(&params, outcome)?;
    psi.iter().map(|&p| mean_link(outcome.family(), p).map_err(CliError::from)).collect::<Result<Vec<_>>>().map(Into::into)
}

pub fn run_replicate(setting: &Setting, protocol: &Protocol, seed: u64, rep: usize) -> Result<Replicate> {
    let rep_seed = child_seed(seed, rep as u64);
    let sim = SimConfig { seed: child_seed(rep_seed, 0), ..SimConfig::new(setting.n, setting.p, setting.family) };
    let data = generate(&sim)?;
    let (views, outcome) = (&data.train.views, &data.train.outcome);
    let p: Vec<usize> = views.iter().map(|v| v.n_vars()).collect();
    let space = protocol.search_space(setting.n, &p);
    let search_seed = child_seed(rep_seed, 1);
    let base = protocol.base_config(views.len(), search_seed)?;
    let result = if protocol.k_range.0 == protocol.k_range.1 {
        random_search(views, outcome, &base, &space, &mut ChaCha8Rng::seed_from_u64(search_seed))?.best_result
    } else {
        select_k(views, outcome, &base, &space)?.chosen().best_result.clone()
    };

    let truth = memberships(&data.train.truth.assignments, &data.train.truth.variable_members, &p)?;
    let est = memberships(&result.assignments, &result.variable_members, &p)?;
    let acc = relevance_recovery_f(&est, &truth)?;
    let rates = fp_fn(&est, &truth)?;
    let train_error = outcome_error(outcome.y(), &fitted_means(&result, outcome)?, setting.family)?;

    let pconfig = PredictConfig {
        tol: protocol.predict_tol,
        max_iter: protocol.predict_max_iter,
        ..PredictConfig::from_fit(&base)
    };
    let prediction = predict(&data.test.views, &result, None, &pconfig)?;
    let test_error = outcome_error(data.test.outcome.y(), &prediction.y_hat, setting.family)?;
    let test_truth = memberships(&data.test.truth.assignments, &data.test.truth.variable_members, &p)?;
    let test_est = memberships(&prediction.assignments, &result.variable_members, &p)?;
    let test_f = relevance_recovery_f(&test_est, &test_truth)?.f_score;

    Ok(Replicate {
        rep,
        seed: rep_seed,
        k: result.k(),
        relevance: acc.relevance,
        recovery: acc.recovery,
        f_score: acc.f_score,
        false_positive: rates.false_positive,
        false_negative: rates.false_negative,
        train_error,
        test_error,
        test_f_score: test_f,
        iterations: result.iterations,
    })
}

/// Runs the replications in parallel and keeps them in index order.
pub fn run_setting(setting: &Setting, protocol: &Protocol, reps: usize, seed: u64) -> Result<Summary> {
    if reps == 0 {
        return Err(CliError::Config("reps must be at least 1".into()));
    }
    let replicates = (0..reps)
        .into_par_iter()
        .map(|rep| run_replicate(setting, protocol, seed, rep))
        .collect::<Result<Vec<_>>>()?;
    Ok(Summary { setting: *setting, protocol: protocol.clone(), seed, replicates })
}

/// Writes `summary.csv` and `replicates.csv`.
pub fn write_summary(dir: &std::path::Path, summary: &Summary) -> Result<()> {
    ensure_dir(dir)?;
    let path = dir.join("summary.csv");
    std::fs::write(&path, summary.table()).map_err(|e| CliError::io(&path, e))?;
    let metric = summary.metric_name();
    let header: Vec<String> = [
        "rep",
        "seed",
        "k",
        "relevance",
        "recovery",
        "f_score",
        "false_positive",
        "false_negative",
        &format!("{metric}_train"),
        &format!("{metric}_test"),
        "test_f_score",
        "iterations",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let rows: Vec<Vec<String>> = summary
        .replicates
        .iter()
        .map(|r| {
            vec![
                r.rep.to_string(),
                r.seed.to_string(),
                r.k.to_string(),
                format_float(r.relevance),
                format_float(r.recovery),
                format_float(r.f_score),
                format_float(r.false_positive),
                format_float(r.false_negative),
                format_float(r.train_error),
                format_float(r.test_error),
                format_float(r.test_f_score),
                r.iterations.to_string(),
            ]
        })
        .collect();
    write_records(&dir.join("replicates.csv"), &header, &rows)
}

pub fn run(opts: &Options, setting: Option<String>, reps: Option<usize>) -> Result<(PathBuf, Summary)> {
    let config = opts.load_config(false)?;
    config.check_keys(KEYS)?;
    let setting_text = setting.or_else(|| config.get("setting").map(str::to_string)).unwrap_or_else(|| "g150x100".into());
    let setting = Setting::parse(&setting_text)?;
    let reps = match reps {
        Some(r) => r,
        None => config.value_or("reps", 10)?,
    };
    let seed = opts.seed(&config)?;
    let defaults = Protocol::default();
    let protocol = Protocol {
        rho: config.value_or("rho", defaults.rho)?,
        deltas: config.list("lambda_delta")?.unwrap_or(defaults.deltas),
        k_range: match config.get("k") {
            Some(k) => super::fit::parse_k(k)?,
            None => defaults.k_range,
        },
        predict_tol: config.value_or("predict.tol", defaults.predict_tol)?,
        predict_max_iter: config.value_or("predict.max_iter", defaults.predict_max_iter)?,
    };
    let out = opts.out_dir(&config, &format!("sib_reproduce_{}", setting.name()));
    opts.note(format!("reproducing {} with {reps} replications (seed {seed})", setting.name()));
    let summary = run_setting(&setting, &protocol, reps, seed)?;
    write_summary(&out, &summary)?;
    opts.note(summary.table());
    Ok((out, summary))
}
