// SPDX-License-Identifier: MIT OR Apache-2.0

//! Ingestion of externally produced credibility scores.

use std::collections::BTreeMap;
use std::path::Path;

use super::instance::QAInstance;
use crate::error::{LabError, Result};

pub const MAX_EXTERNAL_SCORE: f64 = 10.0;

/// `instance id -> doc id -> score`.
pub type ScoreTable = BTreeMap<String, BTreeMap<String, f64>>;

/// Instances carrying the ingested scores, plus how many file entries did
/// not match any document.
#[derive(Debug, Clone)]
pub struct Ingested {
    pub instances: Vec<QAInstance>,
    pub unused_entries: usize,
}

pub fn parse_score_table(text: &str) -> Result<ScoreTable> {
    serde_json::from_str(text).map_err(|e| LabError::Ingestion {
        key: "<file>".into(),
        reason: format!("malformed score file: {e}"),
    })
}

/// Replaces the scores of every instance with those in `table`.
pub fn apply_scores(table: &ScoreTable, instances: &[QAInstance]) -> Result<Ingested> {
    let mut used = 0usize;
    let mut out = Vec::with_capacity(instances.len());
    for q in instances {
        let row = table.get(&q.id).ok_or_else(|| LabError::Ingestion {
            key: q.id.clone(),
            reason: "instance missing from score file".into(),
        })?;
        let mut scores = Vec::with_capacity(q.documents.len());
        for d in &q.documents {
            let key = format!("{}/{}", q.id, d.doc_id);
            let s = *row.get(&d.doc_id).ok_or_else(|| LabError::Ingestion {
                key: key.clone(),
                reason: "document missing from score file".into(),
            })?;
            if !(0.0..=MAX_EXTERNAL_SCORE).contains(&s) {
                return Err(LabError::Ingestion {
                    key,
                    reason: format!("score {s} outside [0, {MAX_EXTERNAL_SCORE}]"),
                });
            }
            scores.push(s);
        }
        used += scores.len();
        let mut q = q.clone();
        q.scores = Some(scores);
        out.push(q);
    }
    let total: usize = table.values().map(BTreeMap::len).sum();
    Ok(Ingested {
        instances: out,
        unused_entries: total - used,
    })
}

/// Loads a score file and applies it; unused entries are logged.
pub fn ingest_external_scores(path: &Path, instances: &[QAInstance]) -> Result<Ingested> {
    let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
    let ingested = apply_scores(&parse_score_table(&text)?, instances)?;
    if ingested.unused_entries > 0 {
        log::warn!(
            "{} score entries in {} matched no document",
            ingested.unused_entries,
            path.display()
        );
    }
    Ok(ingested)
}
