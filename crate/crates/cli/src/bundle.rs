//! On-disk layout of a fitted model.
//!
//! ```text
//! out/
//!   model.json              view names, families, variable names, settings
//!   assignments.csv         sample_id, bicluster, w_1..w_K
//!   variables_<view>.csv    variable, bicluster, loading
//!   beta.csv                term, beta
//!   reorder_<view>.csv      axis, position, index, id
//!   fit_report.json
//!   params/U.csv, params/W.csv, params/V_<view>.csv, params/mu_<view>.csv
//! ```
//!
//! Bicluster labels in files are 1-based.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use sib_core::model::{hard_assign, variable_membership};
use sib_core::{BiclusterResult, Family, ModelParams, StepRule, StopReason};

use crate::dataset::Dataset;
use crate::error::{CliError, Result};
use crate::io::{ensure_dir, format_float, read_json, read_table, read_vector, write_json, write_records, write_table, Table};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewMeta {
    pub name: String,
    pub family: Family,
    pub variables: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub views: Vec<ViewMeta>,
    pub outcome_family: Family,
    pub covariates: Vec<String>,
    pub k: usize,
    pub non_overlapping: bool,
    pub stop_reason: StopReason,
    pub rho: f64,
    pub alpha: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub step_rule: StepRule,
}

/// A model read back from disk.
#[derive(Debug, Clone)]
pub struct SavedModel {
    pub meta: ModelMeta,
    pub result: BiclusterResult,
    pub sample_ids: Vec<String>,
}

pub fn bicluster_labels(k: usize) -> Vec<String> {
    (1..=k).map(|c| format!("b{c}")).collect()
}

pub fn check_view_name(name: &str) -> Result<()> {
    if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
        return Err(CliError::Config(format!(
            "view name {name:?} must use only letters, digits, '_' or '-'"
        )));
    }
    Ok(())
}

fn matrix_table(ids: &[String], columns: Vec<String>, data: &Array2<f64>) -> Table {
    Table { row_ids: ids.to_vec(), columns, data: data.clone() }
}

/// Samples ordered by bicluster, then by decreasing weight; variables by
/// first bicluster membership, then by decreasing absolute loading. Both
/// orders fall back to the original index.
pub fn heatmap_order(w: &Array2<f64>, v: &Array2<f64>, assignments: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut rows: Vec<usize> = (0..w.nrows()).collect();
    rows.sort_by(|&a, &b| {
        assignments[a]
            .cmp(&assignments[b])
            .then(w[[b, assignments[b]]].total_cmp(&w[[a, assignments[a]]]))
            .then(a.cmp(&b))
    });
    let k = v.ncols();
    let key = |j: usize| -> (usize, f64) {
        let row = v.row(j);
        match (0..k).find(|&c| row[c] != 0.0) {
            Some(c) => (c, row[c].abs()),
            None => (k, 0.0),
        }
    };
    let mut cols: Vec<usize> = (0..v.nrows()).collect();
    cols.sort_by(|&a, &b| {
        let (ca, la) = key(a);
        let (cb, lb) = key(b);
        ca.cmp(&cb).then(lb.total_cmp(&la)).then(a.cmp(&b))
    });
    (rows, cols)
}

/// Writes every artifact of a fit except the report.
pub fn write_model(out: &Path, data: &Dataset, result: &BiclusterResult, meta: &ModelMeta) -> Result<()> {
    ensure_dir(out)?;
    let params_dir = out.join("params");
    ensure_dir(&params_dir)?;
    let k = result.k();
    let labels = bicluster_labels(k);
    write_json(&out.join("model.json"), meta)?;

    let header: Vec<String> = ["sample_id", "bicluster"]
        .iter()
        .map(|s| s.to_string())
        .chain((1..=k).map(|c| format!("w_{c}")))
        .collect();
    let rows: Vec<Vec<String>> = data
        .sample_ids
        .iter()
        .enumerate()
        .map(|(i, id)| {
            [id.clone(), (result.assignments[i] + 1).to_string()]
                .into_iter()
                .chain(result.params.w.row(i).iter().map(|&x| format_float(x)))
                .collect()
        })
        .collect();
    write_records(&out.join("assignments.csv"), &header, &rows)?;

    for (d, view) in data.views.iter().enumerate() {
        let name = view.name();
        let v = &result.params.v[d];
        let members = &result.variable_members[d];
        let mut rows = Vec::new();
        for (j, var) in data.variable_names[d].iter().enumerate() {
            let mut any = false;
            for (c, set) in members.iter().enumerate() {
                if set.binary_search(&j).is_ok() {
                    rows.push(vec![var.clone(), (c + 1).to_string(), format_float(v[[j, c]])]);
                    any = true;
                }
            }
            if !any {
                rows.push(vec![var.clone(), String::new(), format_float(0.0)]);
            }
        }
        let header = vec!["variable".to_string(), "bicluster".to_string(), "loading".to_string()];
        write_records(&out.join(format!("variables_{name}.csv")), &header, &rows)?;

        let (row_order, col_order) = heatmap_order(&result.params.w, v, &result.assignments);
        let mut rows = Vec::new();
        for (pos, &i) in row_order.iter().enumerate() {
            rows.push(vec!["row".into(), (pos + 1).to_string(), (i + 1).to_string(), data.sample_ids[i].clone()]);
        }
        for (pos, &j) in col_order.iter().enumerate() {
            rows.push(vec!["column".into(), (pos + 1).to_string(), (j + 1).to_string(), data.variable_names[d][j].clone()]);
        }
        let header: Vec<String> = ["axis", "position", "index", "id"].iter().map(|s| s.to_string()).collect();
        write_records(&out.join(format!("reorder_{name}.csv")), &header, &rows)?;

        write_table(&params_dir.join(format!("V_{name}.csv")), "variable", &matrix_table(&data.variable_names[d], labels.clone(), v))?;
        let mu = Table {
            row_ids: data.variable_names[d].clone(),
            columns: vec!["mu".into()],
            data: result.params.mu[d].view().insert_axis(ndarray::Axis(1)).to_owned(),
        };
        write_table(&params_dir.join(format!("mu_{name}.csv")), "variable", &mu)?;
    }

    let terms: Vec<String> = labels.iter().cloned().chain(meta.covariates.iter().cloned()).collect();
    let rows: Vec<Vec<String>> =
        terms.iter().zip(&result.beta_hat).map(|(t, &b)| vec![t.clone(), format_float(b)]).collect();
    write_records(&out.join("beta.csv"), &["term".to_string(), "beta".to_string()], &rows)?;

    write_table(&params_dir.join("U.csv"), "sample_id", &matrix_table(&data.sample_ids, labels.clone(), &result.params.u))?;
    write_table(&params_dir.join("W.csv"), "sample_id", &matrix_table(&data.sample_ids, labels, &result.params.w))?;
    Ok(())
}

fn expect_shape(path: &Path, table: &Table, rows: &[String], cols: usize) -> Result<()> {
    if table.row_ids != rows || table.columns.len() != cols {
        return Err(CliError::Data(format!("{}: does not match model.json", path.display())));
    }
    Ok(())
}

/// Reads a model written by [`write_model`].
pub fn read_model(dir: &Path) -> Result<SavedModel> {
    let meta_path = dir.join("model.json");
    if !meta_path.is_file() {
        return Err(CliError::Data(format!("{}: no saved model found", meta_path.display())));
    }
    let meta: ModelMeta = read_json(&meta_path)?;
    let params_dir = dir.join("params");
    let k = meta.k;
    let mut v = Vec::new();
    let mut mu = Vec::new();
    for view in &meta.views {
        check_view_name(&view.name)?;
        let path = params_dir.join(format!("V_{}.csv", view.name));
        let table = read_table(&path)?;
        expect_shape(&path, &table, &view.variables, k)?;
        v.push(table.data);
        let path = params_dir.join(format!("mu_{}.csv", view.name));
        let (ids, values) = read_vector(&path)?;
        if ids != view.variables {
            return Err(CliError::Data(format!("{}: does not match model.json", path.display())));
        }
        mu.push(values);
    }
    let u_path = params_dir.join("U.csv");
    let u = read_table(&u_path)?;
    let w_path = params_dir.join("W.csv");
    let w = read_table(&w_path)?;
    expect_shape(&w_path, &w, &u.row_ids, k)?;
    if u.columns.len() != k {
        return Err(CliError::Data(format!("{}: does not match model.json", u_path.display())));
    }
    let beta_path = dir.join("beta.csv");
    let (terms, beta) = read_vector(&beta_path)?;
    let expected: Vec<String> = bicluster_labels(k).into_iter().chain(meta.covariates.iter().cloned()).collect();
    if terms != expected {
        return Err(CliError::Data(format!("{}: terms do not match model.json", beta_path.display())));
    }

    let params = ModelParams { u: u.data, v, w: w.data, mu, beta: Array1::zeros(beta.len()) };
    let result = BiclusterResult {
        assignments: hard_assign(&params.w),
        variable_members: variable_membership(&params.v, meta.non_overlapping),
        params,
        beta_hat: beta,
        loss_trace: Vec::new(),
        converged: meta.stop_reason == StopReason::Tolerance,
        stop_reason: meta.stop_reason,
        iterations: 0,
        non_overlapping: meta.non_overlapping,
        separation_warning: false,
        view_families: meta.views.iter().map(|v| v.family).collect(),
        outcome_family: meta.outcome_family,
    };
    Ok(SavedModel { meta, result, sample_ids: u.row_ids })
}
