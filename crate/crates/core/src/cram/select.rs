// SPDX-License-Identifier: MIT OR Apache-2.0

//! Choosing how many top-ranked heads to reweight.

use serde::{Deserialize, Serialize};

use super::ie::{rank_heads, IETable};
use super::mask::HeadId;
use crate::corpus::QAInstance;
use crate::error::{LabError, Result};
use crate::eval::{Evaluator, Policy, PolicyKind, ScoreSource};

/// Multipliers of the positive-IE head count tried during selection.
pub fn default_multiplier_grid() -> Vec<f64> {
    (1..=10).map(|i| i as f64 / 5.0).collect()
}

/// Candidate head counts: `round(c * m_pos)` for each multiplier, plus
/// `m_pos` and 1, clipped to `[1, total_heads]`, sorted and deduplicated.
pub fn candidate_counts(m_pos: usize, total_heads: usize, grid: &[f64]) -> Vec<usize> {
    let mut v: Vec<usize> = grid
        .iter()
        .map(|c| (c * m_pos as f64).round() as usize)
        .chain([m_pos, 1])
        .map(|k| k.clamp(1, total_heads.max(1)))
        .collect();
    v.sort_unstable();
    v.dedup();
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub k: usize,
    pub em: f64,
    pub f1: f64,
}

/// Outcome of the head-count sweep; serializes as the head-set file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    #[serde(with = "head_pairs")]
    pub heads: Vec<HeadId>,
    pub k: usize,
    pub m_pos: usize,
    pub multiplier_grid: Vec<f64>,
    pub candidates: Vec<CandidateScore>,
}

mod head_pairs {
    use super::HeadId;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(heads: &[HeadId], s: S) -> Result<S::Ok, S::Error> {
        heads
            .iter()
            .map(|h| [h.layer, h.head])
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<HeadId>, D::Error> {
        let pairs = Vec::<[usize; 2]>::deserialize(d)?;
        Ok(pairs.into_iter().map(|[l, h]| HeadId::new(l, h)).collect())
    }
}

impl Selection {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("selection serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| LabError::Data(format!("head set file: {e}")))
    }
}

/// Picks the candidate maximizing EM, then F1, then preferring fewer heads.
pub fn pick_best(scores: &[CandidateScore]) -> Option<&CandidateScore> {
    scores.iter().min_by(|a, b| {
        b.em.total_cmp(&a.em)
            .then(b.f1.total_cmp(&a.f1))
            .then(a.k.cmp(&b.k))
    })
}

/// Evaluates CrAM with each candidate count of top-ranked heads on the
/// validation set under ideal scores and keeps the best.
pub fn select_head_count(
    eval: &Evaluator<'_>,
    table: &IETable,
    validation: &[QAInstance],
    grid: &[f64],
) -> Result<Selection> {
    if validation.is_empty() {
        return Err(LabError::Config("validation set is empty".into()));
    }
    let total = eval.model.config.total_heads();
    if table.mean_ie.len() != total {
        return Err(LabError::Selection(format!(
            "IE table covers {} heads, model has {total}",
            table.mean_ie.len()
        )));
    }
    let m_pos = table.positive_count();
    if m_pos == 0 {
        return Err(LabError::Selection("no head has a positive indirect effect".into()));
    }
    let ranked = rank_heads(table);
    let mut scores = Vec::new();
    for k in candidate_counts(m_pos, total, grid) {
        let policy = Policy::new(
            PolicyKind::Cram {
                heads: ranked[..k].to_vec(),
            },
            ScoreSource::Ideal,
        );
        let r = eval.run_condition(validation, &policy)?;
        log::info!("top-{k:<3} heads: validation EM {:.2} F1 {:.2}", r.em, r.f1);
        scores.push(CandidateScore { k, em: r.em, f1: r.f1 });
    }
    let best = pick_best(&scores).expect("at least one candidate").k;
    let mut heads = ranked[..best].to_vec();
    heads.sort();
    Ok(Selection {
        heads,
        k: best,
        m_pos,
        multiplier_grid: grid.to_vec(),
        candidates: scores,
    })
}
