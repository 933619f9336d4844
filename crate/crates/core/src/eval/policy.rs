// SPDX-License-Identifier: MIT OR Apache-2.0

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::MAX_EXTERNAL_SCORE;
use crate::cram::HeadId;
use crate::error::{LabError, Result};

/// How the documents of an instance are combined into the model's input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyKind {
    /// Misinformation documents dropped, no reweighting.
    NaiveClean,
    /// Every document kept, no reweighting.
    NaivePolluted,
    /// Documents scoring below `threshold` dropped.
    Exclusion { threshold: f64 },
    /// Credibility reweighting on the listed heads.
    Cram { heads: Vec<HeadId> },
    /// Credibility reweighting on every head.
    CramAll,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreSource {
    Ideal,
    Ingested,
}

impl fmt::Display for ScoreSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScoreSource::Ideal => "ideal",
            ScoreSource::Ingested => "ingested",
        })
    }
}

impl std::str::FromStr for ScoreSource {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ideal" => Ok(ScoreSource::Ideal),
            "ingested" => Ok(ScoreSource::Ingested),
            other => Err(LabError::Config(format!("unknown score source `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub kind: PolicyKind,
    pub score_source: ScoreSource,
}

impl Policy {
    pub fn new(kind: PolicyKind, score_source: ScoreSource) -> Self {
        Self { kind, score_source }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            PolicyKind::Exclusion { threshold } if !(0.0..=MAX_EXTERNAL_SCORE).contains(threshold) => {
                Err(LabError::Config(format!(
                    "exclusion threshold {threshold} outside [0, {MAX_EXTERNAL_SCORE}]"
                )))
            }
            PolicyKind::Cram { heads } if heads.is_empty() => {
                Err(LabError::Config("cram policy needs a non-empty head set".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn needs_scores(&self) -> bool {
        matches!(
            self.kind,
            PolicyKind::Exclusion { .. } | PolicyKind::Cram { .. } | PolicyKind::CramAll
        )
    }

    /// Short label, e.g. `exclusion(5)`.
    pub fn label(&self) -> String {
        match &self.kind {
            PolicyKind::NaiveClean => "naive_clean".into(),
            PolicyKind::NaivePolluted => "naive_polluted".into(),
            PolicyKind::Exclusion { threshold } => format!("exclusion({threshold})"),
            PolicyKind::Cram { .. } => "cram".into(),
            PolicyKind::CramAll => "cram_all".into(),
        }
    }
}

/// The five standard policies for one head set.
pub fn standard_policies(heads: &[HeadId], threshold: f64, source: ScoreSource) -> Vec<Policy> {
    vec![
        Policy::new(PolicyKind::NaiveClean, source),
        Policy::new(PolicyKind::NaivePolluted, source),
        Policy::new(PolicyKind::Exclusion { threshold }, source),
        Policy::new(PolicyKind::Cram { heads: heads.to_vec() }, source),
        Policy::new(PolicyKind::CramAll, source),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        let s = ScoreSource::Ideal;
        assert!(Policy::new(PolicyKind::Cram { heads: vec![] }, s).validate().is_err());
        assert!(Policy::new(PolicyKind::Exclusion { threshold: 10.5 }, s).validate().is_err());
        assert!(Policy::new(PolicyKind::Exclusion { threshold: 5.0 }, s).validate().is_ok());
        assert_eq!(Policy::new(PolicyKind::Exclusion { threshold: 5.0 }, s).label(), "exclusion(5)");
    }
}
