// SPDX-License-Identifier: MIT OR Apache-2.0

//! Per-token credibility masks and the attention-row reweighting they drive.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::TokenSpan;
use crate::error::{LabError, Result};

/// Masked row mass below this is treated as empty and the row is left alone.
pub const ZERO_SUM_EPS: f64 = 1e-12;

/// One attention head, addressed by layer and head index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct HeadId {
    pub layer: usize,
    pub head: usize,
}

impl HeadId {
    pub fn new(layer: usize, head: usize) -> Self {
        Self { layer, head }
    }
}

impl fmt::Display for HeadId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}H{}", self.layer, self.head)
    }
}

/// Normalized credibility for every prompt token, each entry in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CredibilityMask {
    values: Vec<f64>,
}

impl CredibilityMask {
    /// Mask of all ones: no token is down-weighted.
    pub fn ones(len: usize) -> Self {
        Self {
            values: vec![1.0; len],
        }
    }

    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(LabError::Config(format!(
                "mask entry {i} = {v} outside [0, 1]"
            )));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Extends the mask with ones up to `len`. Tokens appended after the
    /// prompt (answer or generated tokens) belong to no document.
    pub fn extended_to(&self, len: usize) -> Self {
        let mut values = self.values.clone();
        if values.len() < len {
            values.resize(len, 1.0);
        }
        Self { values }
    }

    pub fn is_all_ones(&self) -> bool {
        self.values.iter().all(|&v| v == 1.0)
    }
}

/// Heads to reweight together with the mask applied to each of their rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ModificationPlan {
    pub heads: BTreeSet<HeadId>,
    pub mask: CredibilityMask,
}

impl ModificationPlan {
    pub fn new(heads: impl IntoIterator<Item = HeadId>, mask: CredibilityMask) -> Self {
        Self {
            heads: heads.into_iter().collect(),
            mask,
        }
    }

    pub fn single(head: HeadId, mask: CredibilityMask) -> Self {
        Self::new([head], mask)
    }

    pub fn touches(&self, head: HeadId) -> bool {
        self.heads.contains(&head)
    }
}

/// Min-max normalizes per-document scores onto the tokens of each document.
///
/// Tokens outside every span get 1. When all scores are equal the mask is
/// all ones.
pub fn normalize_scores(
    scores: &[f64],
    spans: &[TokenSpan],
    prompt_len: usize,
) -> Result<CredibilityMask> {
    if scores.is_empty() {
        return Err(LabError::Config("at least one score is required".into()));
    }
    if scores.len() != spans.len() {
        return Err(LabError::Dimension(format!(
            "{} scores for {} document spans",
            scores.len(),
            spans.len()
        )));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(LabError::Numeric(format!("non-finite credibility score {s}")));
    }
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut values = vec![1.0; prompt_len];
    for (span, &s) in spans.iter().zip(scores) {
        if span.start > span.end || span.end > prompt_len {
            return Err(LabError::Dimension(format!(
                "span [{}, {}) outside prompt of length {prompt_len}",
                span.start, span.end
            )));
        }
        let v = if hi > lo { (s - lo) / (hi - lo) } else { 1.0 };
        values[span.start..span.end].fill(v);
    }
    Ok(CredibilityMask { values })
}

/// Reweights one attention row by `mask` and renormalizes it to unit mass.
///
/// When the masked row carries no mass the input row is returned unchanged.
pub fn modify_row(row: &[f64], mask: &[f64]) -> Result<Vec<f64>> {
    let mut out = row.to_vec();
    modify_row_in_place(&mut out, mask)?;
    Ok(out)
}

/// In-place variant of [`modify_row`] used inside the forward pass.
pub fn modify_row_in_place(row: &mut [f64], mask: &[f64]) -> Result<()> {
    if row.len() != mask.len() {
        return Err(LabError::Dimension(format!(
            "row length {} != mask length {}",
            row.len(),
            mask.len()
        )));
    }
    let total: f64 = row.iter().zip(mask).map(|(a, s)| a * s).sum();
    if total < ZERO_SUM_EPS {
        return Ok(());
    }
    for (a, s) in row.iter_mut().zip(mask) {
        *a = *a * s / total;
    }
    Ok(())
}
