//! `sib simulate`: planted-bicluster data with train and test splits.
//!
//! Each split directory holds one CSV per view, `outcome.csv`,
//! `sample_truth.csv`, `variable_truth_<view>.csv` and a `data.conf` that
//! declares the views and outcome for `sib fit` or `sib predict`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use sib_core::simgen::{generate, SimBundle, SimConfig, SimSplit};
use sib_core::{Family, ViewMatrix};

use super::Options;
use crate::config::Config;
use crate::error::{CliError, Result};
use crate::io::{ensure_dir, format_float, write_records, write_table, write_vector, Table};

pub const KEYS: &[&str] = &[
    "n",
    "n_test",
    "p",
    "views",
    "k",
    "scales",
    "important_frac",
    "sigma2_x",
    "sigma2_y",
    "outcome_family",
    "beta",
    "seed",
    "out",
];

pub fn sim_config(config: &Config, seed: u64) -> Result<SimConfig> {
    let family = config.family("outcome_family")?.unwrap_or(Family::Gaussian);
    let mut sim = SimConfig::new(config.value_or("n", 150)?, config.value_or("p", 100)?, family);
    sim.n_test = config.parse_value("n_test")?;
    sim.n_views = config.value_or("views", sim.n_views)?;
    sim.k = config.value_or("k", sim.k)?;
    if let Some(scales) = config.list("scales")? {
        sim.scales = scales;
    }
    sim.important_frac = config.value_or("important_frac", sim.important_frac)?;
    sim.sigma2_x = config.value_or("sigma2_x", sim.sigma2_x)?;
    sim.sigma2_y = config.value_or("sigma2_y", sim.sigma2_y)?;
    if let Some(beta) = config.list("beta")? {
        sim.beta_true = beta;
    }
    sim.seed = seed;
    sim.validate()?;
    Ok(sim)
}

pub fn variable_names(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("x{j}")).collect()
}

fn write_split(dir: &Path, prefix: &str, split: &SimSplit, bundle: &SimBundle, sim: &SimConfig) -> Result<()> {
    ensure_dir(dir)?;
    let n = split.views[0].n_samples();
    let ids: Vec<String> = (1..=n).map(|i| format!("{prefix}{i}")).collect();
    let names = variable_names(sim.p);
    let mut conf = String::new();
    for view in &split.views {
        let table = Table { row_ids: ids.clone(), columns: names.clone(), data: view.data().clone() };
        write_table(&dir.join(format!("{}.csv", view.name())), "sample_id", &table)?;
        writeln!(conf, "view.{0} = {0}.csv\nview.{0}.family = {1}", view.name(), view.family()).expect("string write");
    }
    write_vector(&dir.join("outcome.csv"), "sample_id", &ids, "y", split.outcome.y())?;
    writeln!(conf, "outcome = outcome.csv\noutcome.family = {}", sim.outcome_family).expect("string write");
    std::fs::write(dir.join("data.conf"), conf).map_err(|e| CliError::io(&dir.join("data.conf"), e))?;

    let rows: Vec<Vec<String>> = ids
        .iter()
        .zip(&split.truth.assignments)
        .map(|(id, &a)| vec![id.clone(), (a + 1).to_string()])
        .collect();
    write_records(&dir.join("sample_truth.csv"), &["sample_id".into(), "bicluster".into()], &rows)?;

    for (d, view) in split.views.iter().enumerate() {
        write_variable_truth(dir, view, &split.truth.variable_members[d], &effective_loadings(bundle, sim, d), &names)?;
    }
    Ok(())
}

fn effective_loadings(bundle: &SimBundle, sim: &SimConfig, d: usize) -> Array2<f64> {
    let mut e = &bundle.v[d] * &bundle.gamma[d];
    for (mut col, &s) in e.columns_mut().into_iter().zip(&sim.scales) {
        col *= s;
    }
    e
}

fn write_variable_truth(
    dir: &Path,
    view: &ViewMatrix,
    members: &[Vec<usize>],
    loadings: &Array2<f64>,
    names: &[String],
) -> Result<()> {
    let mut rows = Vec::new();
    for (j, name) in names.iter().enumerate() {
        match members.iter().position(|set| set.contains(&j)) {
            Some(c) => rows.push(vec![name.clone(), (c + 1).to_string(), format_float(loadings[[j, c]])]),
            None => rows.push(vec![name.clone(), String::new(), format_float(0.0)]),
        }
    }
    let header = vec!["variable".to_string(), "bicluster".to_string(), "loading".to_string()];
    write_records(&dir.join(format!("variable_truth_{}.csv", view.name())), &header, &rows)
}

pub fn run(opts: &Options) -> Result<PathBuf> {
    let config = opts.load_config(false)?;
    config.check_keys(KEYS)?;
    let seed = opts.seed(&config)?;
    let sim = sim_config(&config, seed)?;
    let bundle = generate(&sim)?;
    let out = opts.out_dir(&config, "sib_sim");
    write_split(&out.join("train"), "s", &bundle.train, &bundle, &sim)?;
    write_split(&out.join("test"), "t", &bundle.test, &bundle, &sim)?;
    opts.note(format!(
        "simulated n = {}, p = {}, {} views, K = {} (seed {seed}); wrote {}",
        sim.n,
        sim.p,
        sim.n_views,
        sim.k,
        out.display()
    ));
    Ok(out)
}
