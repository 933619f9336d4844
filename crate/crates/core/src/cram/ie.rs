// SPDX-License-Identifier: MIT OR Apache-2.0

//! Indirect effect of each head on the misinformation answer.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mask::{normalize_scores, CredibilityMask, HeadId, ModificationPlan};
use crate::corpus::{QAInstance, Vocab};
use crate::error::{LabError, Result};
use crate::model::{Model, TokenId};

/// P0, P1 and their difference for one (instance, head).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IeRecord {
    pub p0: f64,
    pub p1: f64,
    pub ie: f64,
}

impl IeRecord {
    pub fn from_probs(p0: f64, p1: f64) -> Self {
        Self { p0, p1, ie: p0 - p1 }
    }
}

/// Mean indirect effect per head over an identification set.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct IETable {
    pub mean_ie: BTreeMap<HeadId, f64>,
    pub n_instances: usize,
    /// `(instance id, head) -> record`, when requested.
    pub records: Option<BTreeMap<(String, HeadId), IeRecord>>,
}

impl IETable {
    pub fn get(&self, head: HeadId) -> Option<f64> {
        self.mean_ie.get(&head).copied()
    }

    /// Heads with strictly positive mean IE.
    pub fn positive_count(&self) -> usize {
        self.mean_ie.values().filter(|&&v| v > 0.0).count()
    }

    /// `layer,head,mean_ie,n_instances`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("layer,head,mean_ie,n_instances\n");
        for (h, v) in &self.mean_ie {
            out.push_str(&format!("{},{},{},{}\n", h.layer, h.head, v, self.n_instances));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some("layer,head,mean_ie,n_instances") {
            return Err(LabError::Data("IE table header mismatch".into()));
        }
        let mut mean_ie = BTreeMap::new();
        let mut n_instances = 0;
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
            let bad = || LabError::Data(format!("IE table line {}: `{line}`", i + 2));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(bad());
            }
            let layer = f[0].parse().map_err(|_| bad())?;
            let head = f[1].parse().map_err(|_| bad())?;
            let v: f64 = f[2].parse().map_err(|_| bad())?;
            n_instances = f[3].parse().map_err(|_| bad())?;
            mean_ie.insert(HeadId::new(layer, head), v);
        }
        Ok(Self {
            mean_ie,
            n_instances,
            records: None,
        })
    }
}

/// Everything needed to score the wrong answer for one instance.
#[derive(Debug, Clone)]
pub struct IeProbe {
    pub id: String,
    pub context: Vec<TokenId>,
    pub wrong: Vec<TokenId>,
    /// Zero on misinformation tokens, one elsewhere.
    pub mask: CredibilityMask,
}

/// Misinformation mask: scores 0 for misinformation, 1 for the rest.
pub fn misinformation_mask(instance: &QAInstance, prompt_len: usize) -> Result<CredibilityMask> {
    let scores: Vec<f64> = instance
        .documents
        .iter()
        .map(|d| if d.kind.is_misinformation() { 0.0 } else { 1.0 })
        .collect();
    normalize_scores(&scores, &instance.token_spans, prompt_len)
}

pub fn ie_probe(instance: &QAInstance, vocab: &Vocab) -> Result<IeProbe> {
    if instance.n_misinformation() == 0 {
        return Err(LabError::Instance(format!(
            "instance {} has no misinformation document",
            instance.id
        )));
    }
    let context = instance.prompt_tokens(vocab);
    let mask = misinformation_mask(instance, context.len())?;
    Ok(IeProbe {
        id: instance.id.clone(),
        context,
        wrong: vocab.tokenize(&instance.wrong_answer),
        mask,
    })
}

fn probe_p0(model: &Model, probe: &IeProbe) -> Result<f64> {
    Ok(model.sequence_logprob(&probe.context, &probe.wrong, None)?.exp())
}

fn probe_p1(model: &Model, probe: &IeProbe, head: HeadId) -> Result<f64> {
    let plan = ModificationPlan::single(head, probe.mask.clone());
    Ok(model.sequence_logprob(&probe.context, &probe.wrong, Some(&plan))?.exp())
}

/// IE of `head` on one instance.
pub fn compute_ie(model: &Model, vocab: &Vocab, instance: &QAInstance, head: HeadId) -> Result<IeRecord> {
    let probe = ie_probe(instance, vocab)?;
    model.check_plan(&ModificationPlan::single(head, probe.mask.clone()))?;
    Ok(IeRecord::from_probs(probe_p0(model, &probe)?, probe_p1(model, &probe, head)?))
}

/// Mean IE of every head over `instances`.
///
/// Work fans out across instances; the reduction runs in instance order, so
/// the table does not depend on the thread count.
pub fn compute_ie_table(
    model: &Model,
    vocab: &Vocab,
    instances: &[QAInstance],
    keep_records: bool,
) -> Result<IETable> {
    if instances.is_empty() {
        return Err(LabError::Config("IE set is empty".into()));
    }
    let heads = model.heads();
    let per_instance: Vec<(String, Vec<IeRecord>)> = instances
        .par_iter()
        .map(|q| {
            let with_id = |e: LabError| match e {
                LabError::Instance(m) => LabError::Instance(m),
                other => LabError::Instance(format!("{}: {other}", q.id)),
            };
            let probe = ie_probe(q, vocab).map_err(with_id)?;
            let p0 = probe_p0(model, &probe).map_err(with_id)?;
            let recs = heads
                .iter()
                .map(|&h| Ok(IeRecord::from_probs(p0, probe_p1(model, &probe, h).map_err(with_id)?)))
                .collect::<Result<Vec<_>>>()?;
            Ok((q.id.clone(), recs))
        })
        .collect::<Result<Vec<_>>>()?;

    let n = per_instance.len() as f64;
    let mut mean_ie: BTreeMap<HeadId, f64> = heads.iter().map(|&h| (h, 0.0)).collect();
    for (_, recs) in &per_instance {
        for (h, r) in heads.iter().zip(recs) {
            *mean_ie.get_mut(h).unwrap() += r.ie;
        }
    }
    mean_ie.values_mut().for_each(|v| *v /= n);
    let records = keep_records.then(|| {
        per_instance
            .iter()
            .flat_map(|(id, recs)| heads.iter().zip(recs).map(move |(&h, &r)| ((id.clone(), h), r)))
            .collect()
    });
    Ok(IETable {
        mean_ie,
        n_instances: instances.len(),
        records,
    })
}

/// Heads by descending mean IE; ties by (layer, head).
pub fn rank_heads(table: &IETable) -> Vec<HeadId> {
    let mut v: Vec<(HeadId, f64)> = table.mean_ie.iter().map(|(&h, &x)| (h, x)).collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    v.into_iter().map(|(h, _)| h).collect()
}

/// Writes `layer,head,mean_ie` rows for plotting the IE distribution.
pub fn export_ie_distribution(table: &IETable, path: &Path) -> Result<()> {
    let mut out = String::from("layer,head,mean_ie\n");
    for (h, v) in &table.mean_ie {
        out.push_str(&format!("{},{},{}\n", h.layer, h.head, v));
    }
    std::fs::write(path, out).map_err(|e| LabError::io(path, e))
}
