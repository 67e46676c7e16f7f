//! Delimited-text ingestion with named column roles.

use std::collections::HashSet;
use std::fs::File;
use std::path::Path;

use csv::{ReaderBuilder, Trim};
use knockmed::Dataset;
use nalgebra::{DMatrix, DVector};

use crate::error::CliError;

/// Fields treated as missing.
pub const MISSING: [&str; 2] = ["", "NA"];

#[derive(Debug, Clone, Copy)]
pub struct Roles<'a> {
    pub exposure: &'a str,
    pub outcome: &'a str,
    pub covariates: &'a [String],
    /// Explicit mediator columns; when empty, `mediator_prefix` is used.
    pub mediators: &'a [String],
    pub mediator_prefix: &'a str,
}

#[derive(Debug, Clone)]
pub struct Table {
    pub dataset: Dataset,
    pub mediator_names: Vec<String>,
    pub covariate_names: Vec<String>,
    pub rows_read: usize,
    pub rows_dropped: usize,
}

fn lookup(headers: &csv::StringRecord, name: &str) -> Result<usize, CliError> {
    let mut hits = headers.iter().enumerate().filter(|(_, h)| *h == name).map(|(i, _)| i);
    let first = hits.next().ok_or_else(|| CliError::Input(format!("column `{name}` not found")))?;
    if hits.next().is_some() {
        return Err(CliError::Input(format!("column `{name}` appears more than once in the header")));
    }
    Ok(first)
}

/// Resolves the mediator column names: the explicit list if given, otherwise
/// every header starting with the prefix that has no other role.
pub fn mediator_columns(headers: &csv::StringRecord, roles: &Roles<'_>) -> Result<Vec<String>, CliError> {
    if !roles.mediators.is_empty() {
        return Ok(roles.mediators.to_vec());
    }
    if roles.mediator_prefix.is_empty() {
        return Err(CliError::Config("mediator prefix must not be empty".into()));
    }
    let taken: HashSet<&str> =
        [roles.exposure, roles.outcome].into_iter().chain(roles.covariates.iter().map(String::as_str)).collect();
    let names: Vec<String> = headers
        .iter()
        .filter(|h| h.starts_with(roles.mediator_prefix) && !taken.contains(h))
        .map(str::to_string)
        .collect();
    if names.is_empty() {
        return Err(CliError::Input(format!("no column starts with mediator prefix `{}`", roles.mediator_prefix)));
    }
    Ok(names)
}

fn check_disjoint(exposure: &str, outcome: &str, covariates: &[String], mediators: &[String]) -> Result<(), CliError> {
    let mut seen = HashSet::new();
    let all = [exposure, outcome].into_iter().chain(covariates.iter().map(String::as_str)).chain(mediators.iter().map(String::as_str));
    for name in all {
        if !seen.insert(name) {
            return Err(CliError::Config(format!("column `{name}` is assigned more than one role")));
        }
    }
    Ok(())
}

pub fn read_table(path: &Path, delimiter: u8, roles: &Roles<'_>) -> Result<Table, CliError> {
    let file = File::open(path).map_err(|e| CliError::Input(format!("cannot open {}: {e}", path.display())))?;
    let mut reader = ReaderBuilder::new().delimiter(delimiter).trim(Trim::All).from_reader(file);
    let headers = reader.headers().map_err(|e| CliError::Input(format!("cannot read header: {e}")))?.clone();

    let mediator_names = mediator_columns(&headers, roles)?;
    check_disjoint(roles.exposure, roles.outcome, roles.covariates, &mediator_names)?;

    let x_col = lookup(&headers, roles.exposure)?;
    let y_col = lookup(&headers, roles.outcome)?;
    let v_cols = roles.covariates.iter().map(|c| lookup(&headers, c)).collect::<Result<Vec<_>, _>>()?;
    let m_cols = mediator_names.iter().map(|c| lookup(&headers, c)).collect::<Result<Vec<_>, _>>()?;

    // Column order within a row: x, y, covariates, mediators.
    let mut order = vec![x_col, y_col];
    order.extend(&v_cols);
    order.extend(&m_cols);

    let width = order.len();
    let mut values: Vec<f64> = Vec::new();
    let mut rows_read = 0;
    let mut rows_dropped = 0;
    let mut row = vec![0.0; order.len()];
    for record in reader.records() {
        let record = record.map_err(|e| CliError::Input(e.to_string()))?;
        rows_read += 1;
        let line = record.position().map_or(rows_read + 1, |p| p.line() as usize);
        let mut complete = true;
        for (slot, &col) in row.iter_mut().zip(&order) {
            let field = record.get(col).unwrap_or("");
            if MISSING.contains(&field) {
                complete = false;
                break;
            }
            let value: f64 = field.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| {
                CliError::Input(format!("column `{}`, line {line}: `{field}` is not a finite number", &headers[col]))
            })?;
            *slot = value;
        }
        if complete {
            values.extend_from_slice(&row);
        } else {
            rows_dropped += 1;
        }
    }
    let n = values.len() / width;
    if n == 0 {
        return Err(CliError::Input(format!("{} has no complete rows", path.display())));
    }

    let d = v_cols.len();
    let block = |start: usize, cols: usize| DMatrix::from_fn(n, cols, |i, j| values[i * width + start + j]);
    let column = |c: usize| DVector::from_fn(n, |i, _| values[i * width + c]);
    let dataset = Dataset::new(column(0), block(2, d), block(2 + d, m_cols.len()), column(1))
    .map_err(crate::error::classify)?;
    Ok(Table { dataset, mediator_names, covariate_names: roles.covariates.to_vec(), rows_read, rows_dropped })
}
