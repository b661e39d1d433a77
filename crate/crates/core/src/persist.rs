//! Saved models: a fitted forest with the column names and scaling needed
//! to apply it to raw tables.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::Forest;
use crate::table::{MinMaxScaler, RawTable};

pub const FORMAT: &str = "kerf-model";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedModel {
    pub format: String,
    pub version: u32,
    pub features: Vec<String>,
    pub response: String,
    /// Present when features were min-max scaled before fitting.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scaler: Option<MinMaxScaler>,
    pub forest: Forest,
}

impl SavedModel {
    pub fn new(features: Vec<String>, response: String, scaler: Option<MinMaxScaler>, forest: Forest) -> Result<Self> {
        if features.len() != forest.dim() {
            return Err(Error::DimensionMismatch {
                expected: forest.dim(),
                actual: features.len(),
            });
        }
        Ok(Self {
            format: FORMAT.into(),
            version: VERSION,
            features,
            response,
            scaler,
            forest,
        })
    }

    pub fn to_writer<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer(out, self)?;
        Ok(())
    }

    pub fn from_reader<R: Read>(input: R) -> Result<Self> {
        let m: Self = serde_json::from_reader(input)?;
        if m.format != FORMAT || m.version != VERSION {
            return Err(Error::InvalidData(format!(
                "not a {FORMAT} v{VERSION} file (found {} v{})",
                m.format, m.version
            )));
        }
        if m.features.len() != m.forest.dim() {
            return Err(Error::InvalidData("feature list does not match the forest".into()));
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.to_writer(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_reader(BufReader::new(File::open(path)?))
    }

    /// Query points from a table holding (at least) the model's feature
    /// columns, scaled like the training data.
    pub fn queries(&self, table: &RawTable) -> Result<Vec<Vec<f64>>> {
        let idx: Vec<usize> = self
            .features
            .iter()
            .map(|f| table.column_index(f))
            .collect::<Result<_>>()?;
        Ok(table
            .rows
            .iter()
            .map(|row| {
                let raw: Vec<f64> = idx.iter().map(|&i| row[i]).collect();
                match &self.scaler {
                    Some(s) => s.transform(&raw),
                    None => raw,
                }
            })
            .collect())
    }
}
