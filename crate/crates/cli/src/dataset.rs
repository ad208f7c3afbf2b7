//! Loading views, outcome and covariates named in a config.

use std::path::Path;

use ndarray::Array2;
use sib_core::{Family, OutcomeSpec, ViewMatrix};

use crate::config::{Config, ViewSpec};
use crate::error::{CliError, Result};
use crate::io::{read_table, read_vector};

/// Views aligned on a common list of sample identifiers.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub sample_ids: Vec<String>,
    pub views: Vec<ViewMatrix>,
    pub variable_names: Vec<Vec<String>>,
    pub covariates: Option<Array2<f64>>,
    pub covariate_names: Vec<String>,
}

impl Dataset {
    pub fn view_names(&self) -> Vec<String> {
        self.views.iter().map(|v| v.name().to_string()).collect()
    }

    pub fn n_vars(&self) -> Vec<usize> {
        self.views.iter().map(ViewMatrix::n_vars).collect()
    }
}

fn check_ids(path: &Path, ids: &[String], expected: &[String]) -> Result<()> {
    if ids != expected {
        let first = ids.iter().zip(expected).position(|(a, b)| a != b).unwrap_or(ids.len().min(expected.len()));
        return Err(CliError::Data(format!(
            "{}: sample identifiers differ from the first view (first mismatch at row {})",
            path.display(),
            first + 1
        )));
    }
    Ok(())
}

pub fn load_views(specs: &[ViewSpec], covariates: Option<&Path>) -> Result<Dataset> {
    if specs.is_empty() {
        return Err(CliError::Config("no views declared (use view.<name> = <file>)".into()));
    }
    let mut sample_ids: Option<Vec<String>> = None;
    let mut views = Vec::new();
    let mut variable_names = Vec::new();
    for spec in specs {
        let table = read_table(&spec.path)?;
        match &sample_ids {
            None => sample_ids = Some(table.row_ids.clone()),
            Some(ids) => check_ids(&spec.path, &table.row_ids, ids)?,
        }
        let view = ViewMatrix::new(spec.name.clone(), table.data, spec.family)
            .map_err(|e| CliError::from(e).context(&spec.path.display().to_string()))?;
        views.push(view);
        variable_names.push(table.columns);
    }
    let sample_ids = sample_ids.expect("at least one view");
    let (covariates, covariate_names) = match covariates {
        Some(path) => {
            let table = read_table(path)?;
            check_ids(path, &table.row_ids, &sample_ids)?;
            (Some(table.data), table.columns)
        }
        None => (None, Vec::new()),
    };
    Ok(Dataset { sample_ids, views, variable_names, covariates, covariate_names })
}

/// Outcome file aligned with the dataset's samples.
pub fn load_outcome(path: &Path, family: Family, data: &Dataset) -> Result<OutcomeSpec> {
    let (ids, y) = read_vector(path)?;
    check_ids(path, &ids, &data.sample_ids)?;
    OutcomeSpec::new(y, family, data.covariates.clone()).map_err(|e| CliError::from(e).context(&path.display().to_string()))
}

/// Views and covariates from `view.*` and `covariates` keys.
pub fn load_from_config(config: &Config) -> Result<Dataset> {
    let covariates = config.path("covariates");
    load_views(&config.views()?, covariates.as_deref())
}
