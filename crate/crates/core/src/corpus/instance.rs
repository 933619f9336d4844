// SPDX-License-Identifier: MIT OR Apache-2.0

//! QA instances: documents, prompt assembly and span bookkeeping.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::templates::{self, PLACEHOLDER};
use super::vocab::{pre_tokenize, Vocab, ANS, BOS, SEP};
use super::world::World;
use crate::error::{LabError, Result};
use crate::model::TokenId;
use crate::seed::derive_seed;

pub const HIGH_SCORE: f64 = 10.0;
pub const LOW_SCORE: f64 = 1.0;
/// Chance that a plain fact document carries one unrelated fact as filler.
pub const FILLER_PROB: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocKind {
    HighCredibility,
    Misinformation,
    FilteredMisinformation,
}

impl DocKind {
    pub fn is_misinformation(self) -> bool {
        !matches!(self, DocKind::HighCredibility)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub kind: DocKind,
    pub text: String,
    /// Answer string this document asserts.
    pub supports: String,
}

/// Half-open token range `[start, end)` inside the assembled prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSpan {
    pub start: usize,
    pub end: usize,
}

impl TokenSpan {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

/// One query with its retrieved documents.
///
/// `token_spans[i]` locates `documents[i]` in the prompt; `scores`, when
/// present, is aligned the same way.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "InstanceRecord", try_from = "InstanceRecord")]
pub struct QAInstance {
    pub id: String,
    /// Index of the underlying fact in the world.
    pub fact: usize,
    /// Seed the documents were generated from.
    pub seed: u64,
    pub query: String,
    pub gold_answer: String,
    pub wrong_answer: String,
    pub documents: Vec<Document>,
    pub scores: Option<Vec<f64>>,
    pub token_spans: Vec<TokenSpan>,
}

#[derive(Serialize, Deserialize)]
struct InstanceRecord {
    id: String,
    fact: usize,
    seed: u64,
    query: String,
    gold_answer: String,
    wrong_answer: String,
    documents: Vec<Document>,
    scores: Option<Vec<f64>>,
    token_spans: BTreeMap<String, [usize; 2]>,
}

impl From<QAInstance> for InstanceRecord {
    fn from(q: QAInstance) -> Self {
        let token_spans = q
            .documents
            .iter()
            .zip(&q.token_spans)
            .map(|(d, s)| (d.doc_id.clone(), [s.start, s.end]))
            .collect();
        InstanceRecord {
            id: q.id,
            fact: q.fact,
            seed: q.seed,
            query: q.query,
            gold_answer: q.gold_answer,
            wrong_answer: q.wrong_answer,
            documents: q.documents,
            scores: q.scores,
            token_spans,
        }
    }
}

impl TryFrom<InstanceRecord> for QAInstance {
    type Error = String;

    fn try_from(r: InstanceRecord) -> std::result::Result<Self, String> {
        let texts: Vec<&str> = r.documents.iter().map(|d| d.text.as_str()).collect();
        let (_, spans) = assemble_prompt(&texts, &r.query);
        for (d, s) in r.documents.iter().zip(&spans) {
            match r.token_spans.get(&d.doc_id) {
                Some(&[a, b]) if a == s.start && b == s.end => {}
                other => {
                    return Err(format!(
                        "instance {}: span of {} is {other:?}, prompt places it at [{}, {})",
                        r.id, d.doc_id, s.start, s.end
                    ))
                }
            }
        }
        if r.token_spans.len() != r.documents.len() {
            return Err(format!("instance {}: span map does not match documents", r.id));
        }
        if let Some(s) = &r.scores {
            if s.len() != r.documents.len() {
                return Err(format!("instance {}: {} scores for {} documents", r.id, s.len(), r.documents.len()));
            }
        }
        Ok(QAInstance {
            id: r.id,
            fact: r.fact,
            seed: r.seed,
            query: r.query,
            gold_answer: r.gold_answer,
            wrong_answer: r.wrong_answer,
            documents: r.documents,
            scores: r.scores,
            token_spans: spans,
        })
    }
}

/// Builds the prompt `BOS d1 SEP d2 ... dn SEP query ANS` as word pieces and
/// returns the span of every document.
pub fn assemble_prompt(documents: &[&str], query: &str) -> (Vec<String>, Vec<TokenSpan>) {
    let mut pieces = vec![BOS.to_string()];
    let mut spans = Vec::with_capacity(documents.len());
    for (i, doc) in documents.iter().enumerate() {
        if i > 0 {
            pieces.push(SEP.to_string());
        }
        let start = pieces.len();
        pieces.extend(pre_tokenize(doc).into_iter().map(str::to_owned));
        spans.push(TokenSpan {
            start,
            end: pieces.len(),
        });
    }
    pieces.push(SEP.to_string());
    pieces.extend(pre_tokenize(query).into_iter().map(str::to_owned));
    pieces.push(ANS.to_string());
    (pieces, spans)
}

pub fn pieces_to_ids(pieces: &[String], vocab: &Vocab) -> Vec<TokenId> {
    pieces.iter().map(|p| vocab.id(p)).collect()
}

impl QAInstance {
    pub fn prompt_pieces(&self) -> Vec<String> {
        let texts: Vec<&str> = self.documents.iter().map(|d| d.text.as_str()).collect();
        assemble_prompt(&texts, &self.query).0
    }

    pub fn prompt_tokens(&self, vocab: &Vocab) -> Vec<TokenId> {
        pieces_to_ids(&self.prompt_pieces(), vocab)
    }

    pub fn n_misinformation(&self) -> usize {
        self.documents.iter().filter(|d| d.kind.is_misinformation()).count()
    }

    /// Same query with only the documents for which `keep` is true.
    pub fn retain_documents(&self, keep: impl Fn(usize, &Document) -> bool) -> QAInstance {
        let kept: Vec<usize> = (0..self.documents.len())
            .filter(|&i| keep(i, &self.documents[i]))
            .collect();
        let documents: Vec<Document> = kept.iter().map(|&i| self.documents[i].clone()).collect();
        let scores = self
            .scores
            .as_ref()
            .map(|s| kept.iter().map(|&i| s[i]).collect());
        let texts: Vec<&str> = documents.iter().map(|d| d.text.as_str()).collect();
        let (_, token_spans) = assemble_prompt(&texts, &self.query);
        QAInstance {
            documents,
            scores,
            token_spans,
            ..self.clone()
        }
    }
}

/// Layout of one generated instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub n_high: usize,
    pub n_mis: usize,
    pub filtered: bool,
    /// Inclusive range of wrong-answer assertions per misinformation piece.
    pub mis_repeats: (usize, usize),
}

impl Default for InstanceSpec {
    fn default() -> Self {
        Self {
            n_high: 4,
            n_mis: 1,
            filtered: false,
            mis_repeats: (1, 4),
        }
    }
}

impl InstanceSpec {
    pub fn with_n_mis(self, n_mis: usize) -> Self {
        Self { n_mis, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_high == 0 {
            return Err(LabError::Config("n_high must be at least 1".into()));
        }
        let (lo, hi) = self.mis_repeats;
        if lo == 0 || lo > hi {
            return Err(LabError::Config(format!("invalid mis_repeats range {lo}..={hi}")));
        }
        Ok(())
    }
}

/// Picks a world fact about another subject whose object is not `avoid`.
fn filler_sentence(world: &World, subject: usize, avoid: &[usize], rng: &mut ChaCha8Rng) -> Option<String> {
    for _ in 0..64 {
        let f = &world.facts[rng.random_range(0..world.facts.len())];
        if f.subject != subject && !avoid.contains(&f.object) {
            return Some(templates::fact_sentence(
                world.relation(f.relation),
                world.entity(f.subject),
                world.entity(f.object),
            ));
        }
    }
    None
}

/// Generates the instance for `fact_index`.
///
/// High-credibility documents and their order depend only on `seed`, and the
/// k-th misinformation piece and its insertion point do not depend on
/// `n_mis`, so instances at different pollution levels nest.
pub fn gen_instance(
    world: &World,
    fact_index: usize,
    spec: &InstanceSpec,
    seed: u64,
    id: &str,
) -> Result<QAInstance> {
    spec.validate()?;
    let fact = *world.fact(fact_index)?;
    let subject = world.entity(fact.subject);
    let relation = world.relation(fact.relation);
    let gold = world.entity(fact.object);
    let wrong = world.entity(fact.distractor_object);

    let mut high_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "high"));
    let mut docs: Vec<Document> = (0..spec.n_high)
        .map(|i| {
            let claim = templates::fact_sentence(relation, subject, gold);
            let avoid = [fact.object, fact.distractor_object];
            let filler = if high_rng.random_bool(FILLER_PROB) {
                filler_sentence(world, fact.subject, &avoid, &mut high_rng)
            } else {
                None
            };
            let text = match filler {
                Some(filler) if high_rng.random_bool(0.5) => format!("{filler} {claim}"),
                Some(filler) => format!("{claim} {filler}"),
                None => claim,
            };
            Document {
                doc_id: format!("h{i}"),
                kind: DocKind::HighCredibility,
                text,
                supports: gold.to_string(),
            }
        })
        .collect();
    docs.shuffle(&mut high_rng);

    let mut mis_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "mis"));
    let (kind, denied) = if spec.filtered {
        (DocKind::FilteredMisinformation, PLACEHOLDER)
    } else {
        (DocKind::Misinformation, gold)
    };
    for i in 0..spec.n_mis {
        let repeats = mis_rng.random_range(spec.mis_repeats.0..=spec.mis_repeats.1);
        let at = mis_rng.random_range(0..=docs.len());
        docs.insert(
            at,
            Document {
                doc_id: format!("m{i}"),
                kind,
                text: templates::misinformation_piece(relation, subject, denied, wrong, repeats),
                supports: wrong.to_string(),
            },
        );
    }

    let query = templates::query(relation, subject);
    let texts: Vec<&str> = docs.iter().map(|d| d.text.as_str()).collect();
    let (_, token_spans) = assemble_prompt(&texts, &query);
    Ok(QAInstance {
        id: id.to_string(),
        fact: fact_index,
        seed,
        query,
        gold_answer: gold.to_string(),
        wrong_answer: wrong.to_string(),
        documents: docs,
        scores: None,
        token_spans,
    })
}

/// 10 for high-credibility documents, 1 for any misinformation.
pub fn assign_ideal_scores(instance: &QAInstance) -> Vec<f64> {
    instance
        .documents
        .iter()
        .map(|d| if d.kind.is_misinformation() { LOW_SCORE } else { HIGH_SCORE })
        .collect()
}

/// Convenience: `instance` with ideal scores attached.
pub fn with_ideal_scores(mut instance: QAInstance) -> QAInstance {
    instance.scores = Some(assign_ideal_scores(&instance));
    instance
}
