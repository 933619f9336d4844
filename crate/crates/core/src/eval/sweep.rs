// SPDX-License-Identifier: MIT OR Apache-2.0

//! Sweeps over pollution level and identification-set size.

use sha2::{Digest, Sha256};

use super::policy::{Policy, PolicyKind, ScoreSource};
use super::runner::{EvalReport, Evaluator};
use crate::corpus::{apply_scores, relayout, InstanceSpec, QAInstance, ScoreTable, World};
use crate::cram::{compute_ie_table, select_head_count, HeadId, Selection};
use crate::error::{LabError, Result};

/// Hash of the ids and seeds of an instance set.
pub fn instance_fingerprint(instances: &[QAInstance]) -> String {
    let mut h = Sha256::new();
    for q in instances {
        h.update(q.id.as_bytes());
        h.update(q.seed.to_le_bytes());
        h.update((q.fact as u64).to_le_bytes());
    }
    h.finalize()[..12].iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone)]
pub struct SweepEntry {
    pub n_mis: usize,
    pub report: EvalReport,
}

/// Evaluates every policy at every pollution level over the same facts.
///
/// Instances are regenerated from `base` with `n_mis` misinformation pieces.
/// Policies with ingested scores take them from `scores`.
pub fn sweep_misinfo(
    eval: &Evaluator<'_>,
    world: &World,
    base: &[QAInstance],
    spec: &InstanceSpec,
    policies: &[Policy],
    levels: &[usize],
    scores: Option<&ScoreTable>,
) -> Result<Vec<SweepEntry>> {
    for p in policies {
        p.validate()?;
        if p.score_source == ScoreSource::Ingested && scores.is_none() {
            return Err(LabError::Config(format!(
                "policy {} wants ingested scores but no score file was given",
                p.label()
            )));
        }
    }
    let mut out = Vec::with_capacity(policies.len() * levels.len());
    for &n_mis in levels {
        let ideal = relayout(world, base, &spec.with_n_mis(n_mis))?;
        let ingested = match scores {
            Some(t) if policies.iter().any(|p| p.score_source == ScoreSource::Ingested) => {
                Some(apply_scores(t, &ideal)?.instances)
            }
            _ => None,
        };
        for p in policies {
            let set = match p.score_source {
                ScoreSource::Ideal => &ideal,
                ScoreSource::Ingested => ingested.as_ref().expect("checked above"),
            };
            let report = eval.run_condition(set, p)?;
            log::info!("n_mis={n_mis} {:<16} EM {:6.2}  F1 {:6.2}", p.label(), report.em, report.f1);
            out.push(SweepEntry { n_mis, report });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct IeSizeEntry {
    pub size: usize,
    pub selection: Selection,
    pub report: EvalReport,
    pub test_fingerprint: String,
}

#[derive(Debug, Clone)]
pub struct IeSizeSweep {
    pub entries: Vec<IeSizeEntry>,
    /// Max minus min CrAM EM across sizes.
    pub em_spread: f64,
}

/// Re-identifies heads from the first `size` identification instances for
/// each size and evaluates CrAM on the fixed test set.
pub fn sweep_ie_set_size(
    eval: &Evaluator<'_>,
    ie_pool: &[QAInstance],
    validation: &[QAInstance],
    test: &[QAInstance],
    sizes: &[usize],
    grid: &[f64],
) -> Result<IeSizeSweep> {
    let fingerprint = instance_fingerprint(test);
    let mut entries = Vec::with_capacity(sizes.len());
    for &size in sizes {
        if size == 0 || size > ie_pool.len() {
            return Err(LabError::Config(format!(
                "IE set size {size} not in 1..={}",
                ie_pool.len()
            )));
        }
        let table = compute_ie_table(eval.model, eval.vocab, &ie_pool[..size], false)?;
        let selection = select_head_count(eval, &table, validation, grid)?;
        let heads: Vec<HeadId> = selection.heads.clone();
        let report = eval.run_condition(
            test,
            &Policy::new(PolicyKind::Cram { heads }, ScoreSource::Ideal),
        )?;
        entries.push(IeSizeEntry {
            size,
            selection,
            report,
            test_fingerprint: fingerprint.clone(),
        });
    }
    let ems = entries.iter().map(|e| e.report.em);
    let hi = ems.clone().fold(f64::NEG_INFINITY, f64::max);
    let lo = ems.fold(f64::INFINITY, f64::min);
    Ok(IeSizeSweep {
        em_spread: if entries.is_empty() { 0.0 } else { hi - lo },
        entries,
    })
}
