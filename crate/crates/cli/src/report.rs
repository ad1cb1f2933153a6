//! JSON reports with input provenance.
//!
//! Reports carry everything needed to trace a number back to its inputs: the
//! data file path and content hash, the effective configuration, and the raw
//! test results. Regenerating a report from the same inputs yields an
//! identical document (no timestamps, stable field order).

use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use volbreak::detect::TestResult;
use volbreak::estimate::FitResult;

/// Where the numbers came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputProvenance {
    pub path: String,
    pub sha256: String,
    pub rows: usize,
    pub returns: usize,
}

/// One named test outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledTest {
    pub label: String,
    pub result: TestResult,
}

/// One final segment with its refit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentReport {
    pub start: usize,
    pub end: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

/// Full analysis report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub input: InputProvenance,
    /// Echo of the effective command configuration.
    pub config: serde_json::Value,
    pub tests: Vec<LabeledTest>,
    pub change_points: Vec<usize>,
    pub segments: Vec<SegmentReport>,
}

impl Report {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Report> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn any_rejection(&self) -> bool {
        self.tests.iter().any(|t| t.result.reject)
    }
}

/// SHA-256 of a file's contents, hex encoded.
pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes =
        std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    let digest = hasher.finalize();
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}
