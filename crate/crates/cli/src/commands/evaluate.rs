//! `sib evaluate`: bicluster recovery against planted truth.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sib_core::metrics::{fp_fn, memberships, relevance_recovery_f};

use super::Options;
use crate::error::{CliError, Result};
use crate::io::{read_records, write_json};

pub const KEYS: &[&str] = &["estimated", "truth", "out"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub relevance: f64,
    pub recovery: f64,
    pub f_score: f64,
    pub false_positive: f64,
    pub false_negative: f64,
    pub views: Vec<String>,
    pub k_estimated: usize,
    pub k_true: usize,
}

fn column(header: &[String], name: &str, path: &Path) -> Result<usize> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| CliError::Data(format!("{}: no {name:?} column", path.display())))
}

fn parse_label(cell: &str, path: &Path, row: usize) -> Result<Option<usize>> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Ok(None);
    }
    match cell.parse::<usize>() {
        Ok(l) if l >= 1 => Ok(Some(l - 1)),
        _ => Err(CliError::Data(format!("{}: row {row}: bicluster {cell:?} is not a positive label", path.display()))),
    }
}

/// `(id, zero-based label)` pairs from an `id, bicluster` file.
fn read_labels(path: &Path, id_column: &str) -> Result<Vec<(String, Option<usize>)>> {
    if !path.is_file() {
        return Err(CliError::Data(format!("{}: file not found", path.display())));
    }
    let (header, rows) = read_records(path)?;
    let id = column(&header, id_column, path)?;
    let label = column(&header, "bicluster", path)?;
    rows.iter()
        .enumerate()
        .map(|(i, row)| Ok((row[id].clone(), parse_label(&row[label], path, i + 1)?)))
        .collect()
}

/// View names with a `variable_truth_<view>.csv` in `truth`, sorted.
fn truth_views(truth: &Path) -> Result<Vec<String>> {
    let entries = std::fs::read_dir(truth).map_err(|e| CliError::io(truth, e))?;
    let mut views: Vec<String> = entries
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().to_string_lossy().to_string();
            name.strip_prefix("variable_truth_").and_then(|s| s.strip_suffix(".csv")).map(str::to_string)
        })
        .collect();
    views.sort();
    if views.is_empty() {
        return Err(CliError::Data(format!("{}: no variable_truth_<view>.csv files", truth.display())));
    }
    Ok(views)
}

/// Per-bicluster member indices, with labels resolved through `index`.
fn group(labels: &[(String, Option<usize>)], index: &HashMap<&str, usize>, k: usize, path: &Path) -> Result<Vec<Vec<usize>>> {
    let mut sets = vec![Vec::new(); k];
    for (id, label) in labels {
        let &pos = index
            .get(id.as_str())
            .ok_or_else(|| CliError::Data(format!("{}: {id:?} does not appear in the truth", path.display())))?;
        if let Some(l) = label {
            sets[*l].push(pos);
        }
    }
    for set in &mut sets {
        set.sort_unstable();
        set.dedup();
    }
    Ok(sets)
}

fn max_label(labels: &[(String, Option<usize>)]) -> usize {
    labels.iter().filter_map(|(_, l)| l.map(|x| x + 1)).max().unwrap_or(0)
}

pub fn evaluate_dirs(estimated: &Path, truth: &Path) -> Result<Evaluation> {
    let views = truth_views(truth)?;
    let truth_samples_path = truth.join("sample_truth.csv");
    let truth_samples = read_labels(&truth_samples_path, "sample_id")?;
    let est_samples_path = estimated.join("assignments.csv");
    let est_samples = read_labels(&est_samples_path, "sample_id")?;

    let sample_index: HashMap<&str, usize> = truth_samples.iter().enumerate().map(|(i, (id, _))| (id.as_str(), i)).collect();
    let mut truth_vars = Vec::new();
    let mut est_vars = Vec::new();
    for view in &views {
        truth_vars.push(read_labels(&truth.join(format!("variable_truth_{view}.csv")), "variable")?);
        est_vars.push(read_labels(&estimated.join(format!("variables_{view}.csv")), "variable")?);
    }
    let k_true = truth_vars.iter().map(|v| max_label(v)).chain([max_label(&truth_samples)]).max().unwrap_or(0);
    let k_est = est_vars.iter().map(|v| max_label(v)).chain([max_label(&est_samples)]).max().unwrap_or(0);
    if k_true == 0 {
        return Err(CliError::Data(format!("{}: the truth has no biclusters", truth.display())));
    }

    let n = truth_samples.len();
    let to_assignments = |labels: &[(String, Option<usize>)], path: &Path, k: usize| -> Result<Vec<usize>> {
        // Samples without a label sit in an extra group that no bicluster reads.
        let mut out = vec![k; n];
        let mut seen = vec![false; n];
        for (id, label) in labels {
            let &pos = sample_index
                .get(id.as_str())
                .ok_or_else(|| CliError::Data(format!("{}: sample {id:?} does not appear in the truth", path.display())))?;
            seen[pos] = true;
            out[pos] = label.unwrap_or(k);
        }
        if let Some(missing) = seen.iter().position(|&s| !s) {
            return Err(CliError::Data(format!(
                "{}: no assignment for sample {:?}",
                path.display(),
                truth_samples[missing].0
            )));
        }
        Ok(out)
    };
    let truth_assign = to_assignments(&truth_samples, &truth_samples_path, k_true)?;
    // An estimate without biclusters scores as one empty bicluster.
    let k_groups = k_est.max(1);
    let est_assign = to_assignments(&est_samples, &est_samples_path, k_groups)?;

    let mut truth_members = Vec::new();
    let mut est_members = Vec::new();
    let mut n_vars = Vec::new();
    for (d, view) in views.iter().enumerate() {
        let index: HashMap<&str, usize> = truth_vars[d].iter().enumerate().map(|(j, (id, _))| (id.as_str(), j)).collect();
        n_vars.push(truth_vars[d].len());
        truth_members.push(group(&truth_vars[d], &index, k_true, &truth.join(format!("variable_truth_{view}.csv")))?);
        est_members.push(group(&est_vars[d], &index, k_groups, &estimated.join(format!("variables_{view}.csv")))?);
    }

    let truth_m = memberships(&truth_assign, &truth_members, &n_vars)?;
    let est_m = memberships(&est_assign, &est_members, &n_vars)?;
    let acc = relevance_recovery_f(&est_m, &truth_m)?;
    let rates = fp_fn(&est_m, &truth_m)?;
    Ok(Evaluation {
        relevance: acc.relevance,
        recovery: acc.recovery,
        f_score: acc.f_score,
        false_positive: rates.false_positive,
        false_negative: rates.false_negative,
        views,
        k_estimated: k_est,
        k_true,
    })
}

pub fn run(opts: &Options, estimated: Option<PathBuf>, truth: Option<PathBuf>) -> Result<(PathBuf, Evaluation)> {
    let config = opts.load_config(false)?;
    config.check_keys(KEYS)?;
    let estimated = estimated
        .or_else(|| config.path("estimated"))
        .ok_or_else(|| CliError::Config("no estimated directory (use --estimated or the estimated key)".into()))?;
    let truth = truth
        .or_else(|| config.path("truth"))
        .ok_or_else(|| CliError::Config("no truth directory (use --truth or the truth key)".into()))?;
    if !truth.is_dir() {
        return Err(CliError::Data(format!("{}: truth directory not found", truth.display())));
    }
    let eval = evaluate_dirs(&estimated, &truth)?;
    let out = opts.out.clone().or_else(|| config.path("out")).unwrap_or_else(|| estimated.clone());
    crate::io::ensure_dir(&out)?;
    write_json(&out.join("eval.json"), &eval)?;
    opts.note(format!(
        "F = {:.4} (relevance {:.4}, recovery {:.4}), FP = {:.4}, FN = {:.4}; wrote {}",
        eval.f_score,
        eval.relevance,
        eval.recovery,
        eval.false_positive,
        eval.false_negative,
        out.join("eval.json").display()
    ));
    Ok((out, eval))
}
