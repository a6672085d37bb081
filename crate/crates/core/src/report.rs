//! Structured verification results shared by every check.

use serde::{Deserialize, Serialize};

/// Version of the JSON report layout.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    /// The identity or property this record verifies, as a formula.
    pub anchor: String,
    pub status: Status,
    pub residual: f64,
    pub tolerance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness_ref: Option<String>,
}

impl CheckRecord {
    /// A numeric check; passes iff `residual <= tolerance`.
    pub fn numeric(name: impl Into<String>, anchor: impl Into<String>, residual: f64, tolerance: f64) -> Self {
        // NaN residuals must fail
        let status = if residual <= tolerance {
            Status::Pass
        } else {
            Status::Fail
        };
        Self {
            name: name.into(),
            anchor: anchor.into(),
            status,
            residual,
            tolerance,
            witness_ref: None,
        }
    }

    /// A yes/no check encoded as residual 0 (holds) or 1 (fails).
    pub fn boolean(name: impl Into<String>, anchor: impl Into<String>, holds: bool) -> Self {
        Self::numeric(name, anchor, if holds { 0.0 } else { 1.0 }, 0.0)
    }

    pub fn with_witness(mut self, witness: impl Into<String>) -> Self {
        self.witness_ref = Some(witness.into());
        self
    }

    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub schema: u32,
    pub suite: String,
    pub scenario: serde_json::Value,
    pub records: Vec<CheckRecord>,
    pub wall_time_s: f64,
    pub versions: Versions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub freefield: String,
}

impl Default for Versions {
    fn default() -> Self {
        Self {
            freefield: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

impl CheckReport {
    pub fn new(suite: impl Into<String>, scenario: serde_json::Value) -> Self {
        Self {
            schema: SCHEMA_VERSION,
            suite: suite.into(),
            scenario,
            records: Vec::new(),
            wall_time_s: 0.0,
            versions: Versions::default(),
        }
    }

    pub fn push(&mut self, record: CheckRecord) {
        self.records.push(record);
    }

    pub fn extend(&mut self, other: CheckReport) {
        self.records.extend(other.records);
    }

    pub fn passed(&self) -> bool {
        self.records.iter().all(CheckRecord::passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckRecord> {
        self.records.iter().filter(|r| !r.passed())
    }

    pub fn find(&self, name: &str) -> Option<&CheckRecord> {
        self.records.iter().find(|r| r.name == name)
    }

    /// Largest residual among records whose name starts with `prefix`.
    pub fn max_residual(&self, prefix: &str) -> f64 {
        self.records
            .iter()
            .filter(|r| r.name.starts_with(prefix))
            .map(|r| r.residual)
            .fold(0.0, f64::max)
    }

    /// Sorts records by name so serialized output is order independent.
    pub fn sort(&mut self) {
        self.records.sort_by(|a, b| a.name.cmp(&b.name));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_follows_residual() {
        assert!(CheckRecord::numeric("a", "x", 1e-13, 1e-12).passed());
        assert!(!CheckRecord::numeric("a", "x", 1e-11, 1e-12).passed());
        assert!(!CheckRecord::numeric("a", "x", f64::NAN, 1e-12).passed());
        assert!(CheckRecord::boolean("b", "x", true).passed());
        assert!(!CheckRecord::boolean("b", "x", false).passed());
    }

    #[test]
    fn report_json_carries_schema() {
        let mut r = CheckReport::new("propagators", serde_json::json!({"n_time": 10}));
        r.push(CheckRecord::boolean("z", "P G = δ/w", true));
        r.push(CheckRecord::boolean("a", "G^C = -G^Cᵀ", true));
        r.sort();
        let v = serde_json::to_value(&r).unwrap();
        assert_eq!(v["schema"], 1);
        assert_eq!(v["records"][0]["name"], "a");
        let back: CheckReport = serde_json::from_value(v).unwrap();
        assert_eq!(back, r);
    }
}
