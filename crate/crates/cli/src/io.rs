//! CSV tables: header row of column names, first column of row identifiers.
//! Numbers are written in shortest round-trip form, so a write followed by a
//! read reproduces every value bit for bit.

use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{CliError, Result};

/// A numeric matrix with row identifiers and column names.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub row_ids: Vec<String>,
    pub columns: Vec<String>,
    pub data: Array2<f64>,
}

pub fn format_float(x: f64) -> String {
    format!("{x:?}")
}

fn parse_float(cell: &str, path: &Path, row: usize, col: &str) -> Result<f64> {
    cell.trim()
        .parse::<f64>()
        .map_err(|_| CliError::Data(format!("{}: row {row}, column {col:?}: {cell:?} is not a number", path.display())))
}

/// Header and string records of a CSV file.
pub fn read_records(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| CliError::io(path, e))?;
    let header: Vec<String> = reader.headers().map_err(|e| CliError::io(path, e))?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CliError::io(path, e))?;
        rows.push(record.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}

pub fn write_records(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut writer = csv::WriterBuilder::new().from_path(path).map_err(|e| CliError::io(path, e))?;
    writer.write_record(header).map_err(|e| CliError::io(path, e))?;
    for row in rows {
        writer.write_record(row).map_err(|e| CliError::io(path, e))?;
    }
    writer.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_table(path: &Path) -> Result<Table> {
    if !path.is_file() {
        return Err(CliError::Data(format!("{}: file not found", path.display())));
    }
    let (header, rows) = read_records(path)?;
    if header.len() < 2 {
        return Err(CliError::Data(format!("{}: need an identifier column and at least one value column", path.display())));
    }
    let columns: Vec<String> = header[1..].to_vec();
    if rows.is_empty() {
        return Err(CliError::Data(format!("{}: no data rows", path.display())));
    }
    let mut data = Array2::zeros((rows.len(), columns.len()));
    let mut row_ids = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        row_ids.push(row[0].clone());
        for (j, col) in columns.iter().enumerate() {
            data[[i, j]] = parse_float(&row[j + 1], path, i + 1, col)?;
        }
    }
    Ok(Table { row_ids, columns, data })
}

pub fn write_table(path: &Path, id_header: &str, table: &Table) -> Result<()> {
    let header: Vec<String> = std::iter::once(id_header.to_string()).chain(table.columns.iter().cloned()).collect();
    let rows: Vec<Vec<String>> = table
        .row_ids
        .iter()
        .zip(table.data.rows())
        .map(|(id, row)| std::iter::once(id.clone()).chain(row.iter().map(|&x| format_float(x))).collect())
        .collect();
    write_records(path, &header, &rows)
}

/// Single-column table as identifiers and values.
pub fn read_vector(path: &Path) -> Result<(Vec<String>, Array1<f64>)> {
    let table = read_table(path)?;
    if table.columns.len() != 1 {
        return Err(CliError::Data(format!(
            "{}: expected one value column, found {}",
            path.display(),
            table.columns.len()
        )));
    }
    Ok((table.row_ids, table.data.column(0).to_owned()))
}

pub fn write_vector(path: &Path, id_header: &str, ids: &[String], name: &str, values: &Array1<f64>) -> Result<()> {
    let table = Table {
        row_ids: ids.to_vec(),
        columns: vec![name.to_string()],
        data: values.view().insert_axis(ndarray::Axis(1)).to_owned(),
    };
    write_table(path, id_header, &table)
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::io(path, e))?;
    std::fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::io(path, e))
}

pub fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| CliError::Config(format!("cannot create {}: {e}", path.display())))
}
