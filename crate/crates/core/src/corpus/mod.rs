// SPDX-License-Identifier: MIT OR Apache-2.0

//! Synthetic knowledge world, QA instances with credibility-tagged
//! documents, tokenizer, and score ingestion.

mod instance;
mod io;
mod scores;
mod splits;
pub mod templates;
mod training;
mod vocab;
mod world;

pub use instance::{
    assemble_prompt, assign_ideal_scores, gen_instance, pieces_to_ids, with_ideal_scores, DocKind,
    Document, InstanceSpec, QAInstance, TokenSpan, HIGH_SCORE, LOW_SCORE,
};
pub use io::{read_jsonl, to_jsonl, write_jsonl};
pub use scores::{apply_scores, MAX_EXTERNAL_SCORE, ingest_external_scores, parse_score_table, Ingested, ScoreTable};
pub use splits::{relayout, split_dataset, BenchmarkSplits, SplitSizes};
pub use training::{gen_training_set, TrainingItem, TrainingMix};
pub use vocab::{build_vocab, pre_tokenize, Vocab, ANS, BOS, EOS, SEP, SPECIALS, UNK};
pub use world::{gen_world, Fact, World, RELATIONS};
