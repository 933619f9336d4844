// SPDX-License-Identifier: MIT OR Apache-2.0

//! Runs a policy over a set of instances.

use std::collections::HashMap;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{em, f1};
use super::policy::{Policy, PolicyKind, ScoreSource};
use crate::corpus::{QAInstance, Vocab};
use crate::cram::{normalize_scores, CredibilityMask, HeadId, ModificationPlan};
use crate::error::{LabError, Result};
use crate::model::{Model, TokenId};

/// Extra decode budget beyond the gold answer length.
pub const DECODE_SLACK: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub prediction: String,
    pub gold: String,
    pub em: f64,
    pub f1: f64,
}

/// Outcome of one policy over one instance set. EM and F1 are percentages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub policy: String,
    pub score_source: ScoreSource,
    pub n_instances: usize,
    pub em: f64,
    pub f1: f64,
    pub predictions: Vec<Prediction>,
}

/// Model input for one instance under one policy.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedInput {
    pub tokens: Vec<TokenId>,
    pub plan: Option<ModificationPlan>,
}

type CacheKey = (Vec<TokenId>, Vec<HeadId>, Vec<u64>);

/// Evaluates policies against one model, memoizing decodes of identical
/// (prompt, plan) pairs across calls.
pub struct Evaluator<'a> {
    pub model: &'a Model,
    pub vocab: &'a Vocab,
    cache: Mutex<HashMap<CacheKey, Vec<TokenId>>>,
}

fn scores_of(q: &QAInstance) -> Result<&[f64]> {
    q.scores.as_deref().ok_or_else(|| {
        LabError::Config(format!("instance {} has no credibility scores", q.id))
    })
}

/// Builds the prompt (and plan) a policy feeds the model for `q`.
pub fn prepare_input(model: &Model, vocab: &Vocab, q: &QAInstance, policy: &Policy) -> Result<PreparedInput> {
    let reweight = |heads: Vec<HeadId>| -> Result<PreparedInput> {
        let tokens = q.prompt_tokens(vocab);
        let mask = normalize_scores(scores_of(q)?, &q.token_spans, tokens.len())?;
        Ok(PreparedInput {
            tokens,
            plan: Some(ModificationPlan::new(heads, mask)),
        })
    };
    match &policy.kind {
        PolicyKind::NaiveClean => Ok(PreparedInput {
            tokens: q
                .retain_documents(|_, d| !d.kind.is_misinformation())
                .prompt_tokens(vocab),
            plan: None,
        }),
        PolicyKind::NaivePolluted => Ok(PreparedInput {
            tokens: q.prompt_tokens(vocab),
            plan: None,
        }),
        PolicyKind::Exclusion { threshold } => {
            let scores = scores_of(q)?;
            Ok(PreparedInput {
                tokens: q.retain_documents(|i, _| scores[i] >= *threshold).prompt_tokens(vocab),
                plan: None,
            })
        }
        PolicyKind::Cram { heads } => reweight(heads.clone()),
        PolicyKind::CramAll => reweight(model.heads()),
    }
}

impl<'a> Evaluator<'a> {
    pub fn new(model: &'a Model, vocab: &'a Vocab) -> Self {
        Self {
            model,
            vocab,
            cache: Mutex::new(HashMap::new()),
        }
    }

    fn decode(&self, input: &PreparedInput, max_new: usize) -> Result<Vec<TokenId>> {
        let key: CacheKey = match &input.plan {
            Some(p) => (
                input.tokens.clone(),
                p.heads.iter().copied().collect(),
                p.mask.values().iter().map(|v| v.to_bits()).collect(),
            ),
            None => (input.tokens.clone(), Vec::new(), Vec::new()),
        };
        let mut key = key;
        key.2.push(max_new as u64);
        if let Some(hit) = self.cache.lock().unwrap().get(&key) {
            return Ok(hit.clone());
        }
        let out = self.model.greedy_decode(
            &input.tokens,
            input.plan.as_ref(),
            max_new,
            Some(self.vocab.eos()),
        )?;
        self.cache.lock().unwrap().insert(key, out.clone());
        Ok(out)
    }

    /// Greedy answer string for one instance.
    pub fn predict(&self, q: &QAInstance, policy: &Policy) -> Result<String> {
        let input = prepare_input(self.model, self.vocab, q, policy)?;
        let max_new = self.vocab.tokenize(&q.gold_answer).len() + DECODE_SLACK;
        let out = self.decode(&input, max_new)?;
        let answer: Vec<TokenId> = out.into_iter().take_while(|&t| t != self.vocab.eos()).collect();
        Ok(self.vocab.detokenize(&answer))
    }

    pub fn run_condition(&self, instances: &[QAInstance], policy: &Policy) -> Result<EvalReport> {
        policy.validate()?;
        if let PolicyKind::Cram { heads } = &policy.kind {
            self.model
                .check_plan(&ModificationPlan::new(heads.iter().copied(), CredibilityMask::ones(0)))?;
        }
        if policy.needs_scores() {
            instances.iter().try_for_each(|q| scores_of(q).map(|_| ()))?;
        }
        let predictions = instances
            .par_iter()
            .map(|q| {
                let prediction = self.predict(q, policy)?;
                Ok(Prediction {
                    id: q.id.clone(),
                    em: em(&prediction, &q.gold_answer),
                    f1: f1(&prediction, &q.gold_answer),
                    gold: q.gold_answer.clone(),
                    prediction,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let n = predictions.len();
        let mean = |f: fn(&Prediction) -> f64| {
            if n == 0 {
                0.0
            } else {
                100.0 * predictions.iter().map(f).sum::<f64>() / n as f64
            }
        };
        Ok(EvalReport {
            policy: policy.label(),
            score_source: policy.score_source,
            n_instances: n,
            em: mean(|p| p.em),
            f1: mean(|p| p.f1),
            predictions,
        })
    }
}

/// One-shot form of [`Evaluator::run_condition`].
pub fn run_condition(model: &Model, vocab: &Vocab, instances: &[QAInstance], policy: &Policy) -> Result<EvalReport> {
    Evaluator::new(model, vocab).run_condition(instances, policy)
}
