//! Report schema and persistence. A report is the unit of record for one
//! condition: per-seed metrics and sharing snapshots, aggregates, config
//! echo, and checksums over code, data, and the report body itself.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Comparison, HarnessError, Result, RunConfig};
use crate::stats::{SquareMatrix, StructuralVector};

pub const REPORT_VERSION: u32 = 1;

/// Fingerprint of the computational core, embedded at compile time so a
/// report records which code produced it.
pub fn code_fingerprint() -> String {
    let sources = concat!(
        include_str!("../autodiff/tape.rs"),
        include_str!("../autodiff/optim.rs"),
        include_str!("../autodiff/tensor.rs"),
        include_str!("../model.rs"),
        include_str!("../typology.rs"),
        include_str!("../stats.rs"),
        include_str!("../synth/mod.rs"),
        include_str!("mod.rs"),
    );
    crate::sha256_hex(sources.as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub diverged: bool,
    pub dev_accuracy: BTreeMap<String, f64>,
    pub test_accuracy: BTreeMap<String, f64>,
    /// Sharing matrices per layer at the end of training.
    pub alpha: Vec<SquareMatrix>,
    /// Symmetrized pairwise sharing scores.
    pub alpha_scores: Option<SquareMatrix>,
    /// Language-identity embedding rows in language order.
    pub language_embeddings: Vec<Vec<f64>>,
    pub r_structural: Option<f64>,
    pub r_embedding: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub languages: Vec<String>,
    pub families: BTreeMap<String, String>,
    /// Fixed statistic list behind the structural vectors, echoed so
    /// correlations stay comparable across runs.
    pub structural_statistics: Vec<String>,
    pub structural_vectors: Vec<StructuralVector>,
    pub per_language_dev: BTreeMap<String, f64>,
    pub per_language_test: BTreeMap<String, f64>,
    pub mean_dev_accuracy: f64,
    pub mean_test_accuracy: f64,
    pub mean_r_structural: Option<f64>,
    pub median_r_structural: Option<f64>,
    pub mean_r_embedding: Option<f64>,
    pub median_r_embedding: Option<f64>,
    pub diverged_seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checksums {
    pub code: String,
    pub data: String,
    /// Checksum over the report body with this field blanked; excludes
    /// wall-clock time.
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub config: RunConfig,
    pub per_seed: Vec<SeedResult>,
    pub aggregate: Aggregate,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub baseline_comparison: Option<Comparison>,
    pub checksums: Checksums,
    pub wall_clock_secs: f64,
}

impl RunReport {
    /// Checksum of everything except wall-clock time and the checksum
    /// itself.
    pub fn body_checksum(&self) -> Result<String> {
        let mut body = self.clone();
        body.checksums.body = String::new();
        body.wall_clock_secs = 0.0;
        Ok(crate::sha256_hex(serde_json::to_string(&body)?.as_bytes()))
    }

    /// Per-seed mean test accuracy over languages, for completed seeds.
    /// These are the pooled samples significance tests run on.
    pub fn seed_means(&self) -> Vec<f64> {
        self.per_seed
            .iter()
            .filter(|s| !s.diverged)
            .map(|s| {
                s.test_accuracy.values().sum::<f64>() / s.test_accuracy.len().max(1) as f64
            })
            .collect()
    }
}

/// Atomically write a report as versioned JSON.
pub fn save_report(report: &RunReport, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(report)?;
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, json)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Load a report, checking schema version and body checksum.
pub fn load_report(path: &Path) -> Result<RunReport> {
    let json = std::fs::read_to_string(path)?;
    let report: RunReport = serde_json::from_str(&json)?;
    if report.schema_version != REPORT_VERSION {
        return Err(HarnessError::UnsupportedVersion {
            expected: REPORT_VERSION,
            got: report.schema_version,
        });
    }
    let expected = report.body_checksum()?;
    if expected != report.checksums.body {
        return Err(HarnessError::ChecksumMismatch {
            expected,
            got: report.checksums.body.clone(),
        });
    }
    Ok(report)
}
