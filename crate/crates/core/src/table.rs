//! CSV ingestion and min-max scaling onto the unit cube.

use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

/// A fully numeric table read from CSV with a header row.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl RawTable {
    /// Parse a UTF-8 CSV with a header row and `.` decimal separator.
    ///
    /// Row numbers in errors are 1-based file lines (the header is line 1).
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            if rec.len() != headers.len() {
                return Err(Error::Ingestion {
                    row: line,
                    column: String::new(),
                    message: format!("expected {} fields, found {}", headers.len(), rec.len()),
                });
            }
            let row = rec
                .iter()
                .zip(&headers)
                .map(|(cell, name)| {
                    cell.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| Error::Ingestion {
                            row: line,
                            column: name.clone(),
                            message: format!("`{cell}` is not a finite number"),
                        })
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        Ok(Self { headers, rows })
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::InvalidParameter(format!("no column named `{name}`")))
    }

    /// Feature names (every column except `response`, in file order).
    pub fn feature_names(&self, response: Option<&str>) -> Vec<String> {
        self.headers
            .iter()
            .filter(|h| Some(h.as_str()) != response)
            .cloned()
            .collect()
    }

    fn split_columns(&self, response: Option<&str>) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        let ycol = response.map(|r| self.column_index(r)).transpose()?;
        let mut feats = Vec::with_capacity(self.rows.len());
        let mut ys = Vec::with_capacity(self.rows.len());
        for row in &self.rows {
            let mut f = Vec::with_capacity(row.len());
            for (j, &v) in row.iter().enumerate() {
                if Some(j) == ycol {
                    ys.push(v);
                } else {
                    f.push(v);
                }
            }
            feats.push(f);
        }
        if ycol.is_none() {
            ys = vec![0.0; self.rows.len()];
        }
        Ok((feats, ys))
    }

    /// Feature rows (all columns except `response`) without any rescaling.
    pub fn feature_rows(&self, response: Option<&str>) -> Result<Vec<Vec<f64>>> {
        Ok(self.split_columns(response)?.0)
    }

    /// Use the table as-is; coordinates outside `[0,1]` are rejected.
    pub fn to_dataset(&self, response: &str) -> Result<Dataset> {
        let (feats, ys) = self.split_columns(Some(response))?;
        for (i, f) in feats.iter().enumerate() {
            if let Some(j) = f.iter().position(|c| !(0.0..=1.0).contains(c)) {
                let names = self.feature_names(Some(response));
                return Err(Error::Ingestion {
                    row: i + 2,
                    column: names[j].clone(),
                    message: format!("{} lies outside [0,1]; request min-max scaling", f[j]),
                });
            }
        }
        Dataset::from_rows(&feats, ys)
    }
}

/// Per-column affine map onto `[0,1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
}

impl MinMaxScaler {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::InvalidData("cannot scale an empty table".into()))?;
        let mut mins = vec![f64::INFINITY; d];
        let mut maxs = vec![f64::NEG_INFINITY; d];
        for r in rows {
            for j in 0..d {
                mins[j] = mins[j].min(r[j]);
                maxs[j] = maxs[j].max(r[j]);
            }
        }
        Ok(Self { mins, maxs })
    }

    pub fn dim(&self) -> usize {
        self.mins.len()
    }

    /// Map a raw row into the cube. Constant columns go to 0.5; values
    /// beyond the fitted range are clamped.
    pub fn transform(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .enumerate()
            .map(|(j, &v)| {
                let (lo, hi) = (self.mins[j], self.maxs[j]);
                if hi > lo {
                    ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
                } else {
                    0.5
                }
            })
            .collect()
    }

    pub fn inverse(&self, unit: &[f64]) -> Vec<f64> {
        unit.iter()
            .enumerate()
            .map(|(j, &u)| {
                let (lo, hi) = (self.mins[j], self.maxs[j]);
                if hi > lo {
                    lo + u * (hi - lo)
                } else {
                    lo
                }
            })
            .collect()
    }
}

/// Scale every feature column of `table` onto `[0,1]`.
pub fn minmax_scale(table: &RawTable, response: &str) -> Result<(Dataset, MinMaxScaler)> {
    let (feats, ys) = table.split_columns(Some(response))?;
    let scaler = MinMaxScaler::fit(&feats)?;
    let scaled: Vec<Vec<f64>> = feats.iter().map(|r| scaler.transform(r)).collect();
    Ok((Dataset::from_rows(&scaled, ys)?, scaler))
}
