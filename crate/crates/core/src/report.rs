//! Structured pass/fail records for checked inequalities.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Outcome of checking `observed ≤ bound` for one claim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub claim_id: String,
    pub observed: f64,
    /// Non-finite bounds are written as `null`.
    #[serde(with = "finite_or_null")]
    pub bound: f64,
    pub satisfied: bool,
    #[serde(default)]
    pub context: BTreeMap<String, Value>,
}

impl BoundReport {
    /// `satisfied` is `observed ≤ bound + tolerance`.
    pub fn check(claim_id: impl Into<String>, observed: f64, bound: f64, tolerance: f64) -> Self {
        Self {
            claim_id: claim_id.into(),
            observed,
            bound,
            satisfied: observed <= bound + tolerance,
            context: BTreeMap::new(),
        }
    }

    /// Report for an exact identity `observed == expected`.
    pub fn equality(claim_id: impl Into<String>, observed: f64, expected: f64) -> Self {
        Self {
            claim_id: claim_id.into(),
            observed,
            bound: expected,
            satisfied: observed == expected,
            context: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.context.insert(key.to_owned(), value.into());
        self
    }
}

mod finite_or_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}
