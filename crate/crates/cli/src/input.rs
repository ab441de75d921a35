//! Delimited numeric tables with a header row.

use std::fs;
use std::path::Path;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    /// Column-major values.
    pub columns: Vec<Vec<f64>>,
}

impl Table {
    pub fn rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn index_of(&self, name: &str) -> CliResult<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Config(format!("no column named '{name}' (have {})", self.headers.join(", "))))
    }

    pub fn column(&self, name: &str) -> CliResult<&[f64]> {
        Ok(&self.columns[self.index_of(name)?])
    }
}

/// Tab when the header line contains a tab, comma otherwise.
pub fn detect_delimiter(text: &str) -> u8 {
    let header = text.lines().next().unwrap_or("");
    if header.contains('\t') {
        b'\t'
    } else {
        b','
    }
}

pub fn read_table(path: &Path) -> CliResult<Table> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_table(&text)
}

pub fn parse_table(text: &str) -> CliResult<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(detect_delimiter(text))
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(text.as_bytes());
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::Data(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if headers.is_empty() || headers.iter().any(String::is_empty) {
        return Err(CliError::Data("header row has an empty column name".into()));
    }
    for (i, h) in headers.iter().enumerate() {
        if headers[..i].contains(h) {
            return Err(CliError::Data(format!("duplicate column name '{h}'")));
        }
    }
    let mut columns = vec![Vec::new(); headers.len()];
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Data(e.to_string()))?;
        let line = r + 2;
        for (c, cell) in record.iter().enumerate() {
            if cell.is_empty() {
                return Err(CliError::Data(format!("missing value in line {line}, column '{}'", headers[c])));
            }
            let v: f64 = cell.parse().map_err(|_| {
                CliError::Data(format!("non-numeric value '{cell}' in line {line}, column '{}'", headers[c]))
            })?;
            if !v.is_finite() {
                return Err(CliError::Data(format!("non-finite value in line {line}, column '{}'", headers[c])));
            }
            columns[c].push(v);
        }
    }
    if columns[0].is_empty() {
        return Err(CliError::Data("no data rows".into()));
    }
    Ok(Table { headers, columns })
}
