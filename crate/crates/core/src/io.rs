//! CSV ingestion for Gaussian, binary and survival data.
//!
//! Every file has a header row. Gaussian and binary files reserve a column
//! named `y`; survival files reserve `time` and `status`. All other columns
//! are covariates, kept in file order.

use std::io::Read;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::glm::{BinaryDataset, SurvivalDataset};
use crate::linmodel::Dataset;

/// Parsed numeric table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    /// Row-major values.
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    fn column_index(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse {
                line: 1,
                column: 0,
                message: format!("missing required column '{name}'"),
            })
    }

    fn extract(&self, reserved: &[&str]) -> Result<(DMatrix<f64>, Vec<Vec<f64>>, Vec<String>)> {
        let idx: Vec<usize> = reserved
            .iter()
            .map(|r| self.column_index(r))
            .collect::<Result<_>>()?;
        let cov: Vec<usize> = (0..self.header.len()).filter(|c| !idx.contains(c)).collect();
        if cov.is_empty() {
            return Err(Error::Parse {
                line: 1,
                column: 0,
                message: "no covariate columns".into(),
            });
        }
        let n = self.rows.len();
        let x = DMatrix::from_fn(n, cov.len(), |i, j| self.rows[i][cov[j]]);
        let reserved_cols = idx
            .iter()
            .map(|&c| self.rows.iter().map(|r| r[c]).collect())
            .collect();
        let names = cov.iter().map(|&c| self.header[c].clone()).collect();
        Ok((x, reserved_cols, names))
    }
}

/// Read a header + numeric rows CSV. Empty files and files without data rows
/// are parse errors.
pub fn read_table<R: Read>(reader: R) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            column: 0,
            message: e.to_string(),
        })?
        .iter()
        .map(str::to_owned)
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(Error::Parse {
            line: 1,
            column: 0,
            message: "empty file".into(),
        });
    }
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            column: 0,
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let row = record
            .iter()
            .enumerate()
            .map(|(c, field)| {
                field
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse {
                        line,
                        column: c as u64 + 1,
                        message: format!("'{field}' is not a finite number"),
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            line: 2,
            column: 0,
            message: "no data rows".into(),
        });
    }
    Ok(Table { header, rows })
}

/// Gaussian dataset from a CSV with response column `y`; `sigma2` comes from
/// the caller, never from the file.
pub fn read_dataset<R: Read>(reader: R, sigma2: Option<f64>) -> Result<(Dataset, Vec<String>)> {
    let table = read_table(reader)?;
    let (x, mut reserved, names) = table.extract(&["y"])?;
    let y = DVector::from_vec(reserved.remove(0));
    Ok((Dataset::new(x, y, sigma2)?, names))
}

pub fn read_binary<R: Read>(reader: R, include_intercept: bool) -> Result<(BinaryDataset, Vec<String>)> {
    let table = read_table(reader)?;
    let (x, mut reserved, names) = table.extract(&["y"])?;
    let y = reserved.remove(0);
    if let Some(i) = y.iter().position(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::Parse {
            line: i as u64 + 2,
            column: table.column_index("y")? as u64 + 1,
            message: "binary response must be 0 or 1".into(),
        });
    }
    Ok((BinaryDataset::new(x, DVector::from_vec(y), include_intercept)?, names))
}

pub fn read_survival<R: Read>(reader: R) -> Result<(SurvivalDataset, Vec<String>)> {
    let table = read_table(reader)?;
    let (x, reserved, names) = table.extract(&["time", "status"])?;
    let status_col = table.column_index("status")? as u64 + 1;
    let status = reserved[1]
        .iter()
        .enumerate()
        .map(|(i, &s)| match s {
            1.0 => Ok(true),
            0.0 => Ok(false),
            _ => Err(Error::Parse {
                line: i as u64 + 2,
                column: status_col,
                message: "status must be 0 (censored) or 1 (event)".into(),
            }),
        })
        .collect::<Result<Vec<bool>>>()?;
    let time = DVector::from_vec(reserved[0].clone());
    Ok((SurvivalDataset::new(x, time, status)?, names))
}

/// One finite number per non-blank line.
pub fn read_statistics<R: Read>(mut reader: R) -> Result<Vec<f64>> {
    let mut text = String::new();
    reader.read_to_string(&mut text).map_err(|e| Error::Parse {
        line: 0,
        column: 0,
        message: e.to_string(),
    })?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let s = line.trim();
        if s.is_empty() {
            continue;
        }
        let v = s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Parse {
            line: i as u64 + 1,
            column: 1,
            message: format!("'{s}' is not a finite number"),
        })?;
        out.push(v);
    }
    if out.is_empty() {
        return Err(Error::Parse {
            line: 1,
            column: 0,
            message: "no statistics".into(),
        });
    }
    Ok(out)
}
