// SPDX-License-Identifier: MIT OR Apache-2.0

//! Report files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::policy::ScoreSource;
use crate::error::{LabError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub model_checksum: String,
    pub corpus_seed: u64,
    /// `[layer, head]` pairs of the reweighted head set.
    pub head_set: Vec<[usize; 2]>,
    pub grid: Vec<f64>,
    pub filtered: bool,
    /// Hash of the evaluated instance ids and seeds.
    pub test_fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub policy: String,
    pub score_source: ScoreSource,
    pub n_mis: usize,
    pub em: f64,
    pub f1: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSeries {
    pub meta: ReportMeta,
    pub results: Vec<ResultRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl ReportSeries {
    pub fn find(&self, policy: &str, n_mis: usize) -> Option<&ResultRow> {
        self.results
            .iter()
            .find(|r| r.policy == policy && r.n_mis == n_mis)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("policy,score_source,n_mis,em,f1,n\n");
        for r in &self.results {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.policy, r.score_source, r.n_mis, r.em, r.f1, r.n
            ));
        }
        out
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| LabError::Data(format!("report: {e}")))
    }
}

pub fn serialize_report(series: &ReportSeries, path: &Path, format: ReportFormat) -> Result<()> {
    if series.results.is_empty() {
        return Err(LabError::Config("refusing to write an empty report".into()));
    }
    let body = match format {
        ReportFormat::Json => series.to_json(),
        ReportFormat::Csv => series.to_csv(),
    };
    std::fs::write(path, body).map_err(|e| LabError::io(path, e))
}

pub fn load_report(path: &Path) -> Result<ReportSeries> {
    let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
    ReportSeries::from_json(&text)
}
