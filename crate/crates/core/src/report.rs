//! Named pass/fail checks shared by every report.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl Check {
    /// Passes when `value ≤ tolerance`.
    pub fn at_most(name: &str, value: f64, tolerance: f64) -> Self {
        Self::new(name, value, tolerance, value <= tolerance)
    }

    /// Passes when `value ≥ tolerance`.
    pub fn at_least(name: &str, value: f64, tolerance: f64) -> Self {
        Self::new(name, value, tolerance, value >= tolerance)
    }

    pub fn new(name: &str, value: f64, tolerance: f64, pass: bool) -> Self {
        Self {
            name: name.to_string(),
            value,
            tolerance,
            pass,
            detail: None,
        }
    }

    pub fn failed(name: &str, detail: impl Into<String>) -> Self {
        Self {
            detail: Some(detail.into()),
            ..Self::new(name, f64::NAN, 0.0, false)
        }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = Some(detail.into());
        self
    }
}

/// `{checks, timings}`; timings stay empty unless requested so that reports
/// are reproducible byte for byte.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub checks: Vec<Check>,
    pub timings: BTreeMap<String, f64>,
}

impl Diagnostics {
    pub fn push(&mut self, check: Check) {
        self.checks.push(check);
    }

    pub fn extend(&mut self, checks: impl IntoIterator<Item = Check>) {
        self.checks.extend(checks);
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}
