//! Residual-based validation reports shared by the axiom and invariant checks.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub residual: f64,
    pub tolerance: f64,
    pub status: Status,
    /// Set for lower-bound checks, where `residual` is the measured value.
    #[serde(skip_serializing_if = "is_false", default)]
    pub minimum: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note: Option<String>,
}

fn is_false(b: &bool) -> bool {
    !*b
}

impl Check {
    /// Passes iff `residual <= tolerance` (a NaN residual fails).
    pub fn at_most(name: impl Into<String>, residual: f64, tolerance: f64) -> Self {
        let status = if residual <= tolerance { Status::Pass } else { Status::Fail };
        Check { name: name.into(), residual, tolerance, status, minimum: false, note: None }
    }

    /// Passes iff `value >= threshold`; the residual field carries the value.
    pub fn at_least(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        let status = if value >= threshold { Status::Pass } else { Status::Fail };
        Check { name: name.into(), residual: value, tolerance: threshold, status, minimum: true, note: None }
    }

    pub fn skipped(name: impl Into<String>, why: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            residual: 0.0,
            tolerance: 0.0,
            status: Status::Skipped,
            minimum: false,
            note: Some(why.into()),
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    pub fn passed(&self) -> bool {
        self.status != Status::Fail
    }

    /// Re-evaluate against a new tolerance; skipped checks stay skipped.
    pub fn set_tolerance(&mut self, tolerance: f64) {
        self.tolerance = tolerance;
        if self.status != Status::Skipped {
            let ok = if self.minimum { self.residual >= tolerance } else { self.residual <= tolerance };
            self.status = if ok { Status::Pass } else { Status::Fail };
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub checks: Vec<Check>,
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, check: Check) {
        self.checks.push(check);
    }

    pub fn extend(&mut self, other: Report) {
        self.checks.extend(other.checks);
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn residual(&self, name: &str) -> f64 {
        self.get(name).map_or(f64::NAN, |c| c.residual)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed())
    }
}
