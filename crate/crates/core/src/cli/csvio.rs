use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::ols::Dataset;

pub const INTERCEPT_NAME: &str = "(intercept)";

/// A dataset read from CSV, remembering where its columns came from.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LabeledDataset {
    #[serde(skip)]
    pub data: Dataset,
    /// Names of the design columns, `(intercept)` first when one was added.
    pub columns: Vec<String>,
    pub response: String,
    pub intercept: bool,
    /// Position of the response in the original header.
    pub response_index: usize,
}

fn parse_cell(raw: &str, row: usize, column: &str) -> Result<f64> {
    match raw.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::NonNumericCell { row, column: column.to_string(), value: raw.to_string() }),
    }
}

/// Reads a headed, comma separated file. The response column becomes `y`,
/// every other column becomes a covariate in header order.
pub fn read_csv(path: &Path, response: &str, add_intercept: bool) -> Result<LabeledDataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let response_index =
        header.iter().position(|h| h == response).ok_or_else(|| Error::MissingColumn(response.to_string()))?;

    let mut columns: Vec<String> = Vec::with_capacity(header.len());
    if add_intercept {
        columns.push(INTERCEPT_NAME.to_string());
    }
    columns.extend(header.iter().enumerate().filter(|(k, _)| *k != response_index).map(|(_, h)| h.clone()));
    let p = columns.len();

    let mut values = Vec::new();
    let mut y = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let row = r + 1;
        if add_intercept {
            values.push(1.0);
        }
        for (k, cell) in record.iter().enumerate() {
            let v = parse_cell(cell, row, &header[k])?;
            if k == response_index {
                y.push(v);
            } else {
                values.push(v);
            }
        }
    }
    if y.is_empty() || p == 0 {
        return Err(Error::EmptyData);
    }
    let data = Dataset::new(Mat::from_row_major(y.len(), p, values)?, y)?;
    Ok(LabeledDataset { data, columns, response: response.to_string(), intercept: add_intercept, response_index })
}

/// Writes the dataset back in its original column order (without any added
/// intercept), each value in shortest round-trip form.
pub fn write_csv(path: &Path, labeled: &LabeledDataset) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let skip = usize::from(labeled.intercept);
    let mut header: Vec<&str> = labeled.columns[skip..].iter().map(String::as_str).collect();
    header.insert(labeled.response_index, &labeled.response);
    writer.write_record(&header)?;
    let data = &labeled.data;
    for i in 0..data.n() {
        let mut row: Vec<String> = data.x.row(i)[skip..].iter().map(|v| v.to_string()).collect();
        row.insert(labeled.response_index, data.y[i].to_string());
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}
