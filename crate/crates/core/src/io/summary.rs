//! Machine-readable verification results.

use super::IoError;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// One verification check: measured `value` against `tolerance`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    /// Passes when `value ≤ tolerance`.
    pub fn at_most(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self { name: name.into(), value, tolerance, pass: value <= tolerance }
    }

    /// Passes when `value ≥ tolerance`.
    pub fn at_least(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self { name: name.into(), value, tolerance, pass: value >= tolerance }
    }

    /// Passes when `|value − target| ≤ tolerance`; `value` is reported as given.
    pub fn near(name: impl Into<String>, value: f64, target: f64, tolerance: f64) -> Self {
        Self { name: name.into(), value, tolerance, pass: (value - target).abs() <= tolerance }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plain struct serializes")
    }
}

pub fn all_pass(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.pass)
}

pub fn write_summary(checks: &[Check], path: &Path) -> Result<(), IoError> {
    let text = serde_json::to_string_pretty(checks).expect("plain struct serializes");
    std::fs::write(path, text + "\n").map_err(IoError::at(path))
}

pub fn read_summary(path: &Path) -> Result<Vec<Check>, super::ParseError> {
    let text = std::fs::read_to_string(path).map_err(IoError::at(path))?;
    serde_json::from_str(&text).map_err(|e| super::ParseError::Format { path: path.into(), line: e.line(), message: e.to_string() })
}
