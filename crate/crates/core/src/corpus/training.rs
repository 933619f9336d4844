// SPDX-License-Identifier: MIT OR Apache-2.0

//! Training corpus for the reader model.
//!
//! Each item names a subject and relation, then mixes plain fact documents
//! with news-style pieces that may disagree. The target is whichever object
//! is asserted more often, so the trained reader answers by consensus and
//! is swayed by repeated claims. Objects are drawn fresh per item, which
//! forces the answer to be read from the documents.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::instance::{assemble_prompt, pieces_to_ids, FILLER_PROB};
use super::templates::{self, PLACEHOLDER};
use super::vocab::Vocab;
use super::world::World;
use crate::error::{LabError, Result};
use crate::model::TrainExample;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingItem {
    pub id: String,
    pub documents: Vec<String>,
    pub query: String,
    pub answer: String,
}

impl TrainingItem {
    pub fn to_example(&self, vocab: &Vocab) -> TrainExample {
        let docs: Vec<&str> = self.documents.iter().map(String::as_str).collect();
        let (pieces, _) = assemble_prompt(&docs, &self.query);
        let mut answer = vocab.tokenize(&self.answer);
        answer.push(vocab.eos());
        TrainExample {
            context: pieces_to_ids(&pieces, vocab),
            answer,
        }
    }
}

/// Shape of the training mixture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingMix {
    pub max_plain: usize,
    pub max_news: usize,
    pub max_news_repeats: usize,
    /// Longest prompt allowed, in tokens.
    pub max_prompt_len: usize,
}

impl Default for TrainingMix {
    fn default() -> Self {
        Self {
            max_plain: 4,
            max_news: 3,
            max_news_repeats: 6,
            max_prompt_len: 200,
        }
    }
}

/// Chance that an item also carries one to three empty document slots.
pub const EMPTY_SLOT_PROB: f64 = 0.25;

fn random_entity(world: &World, rng: &mut ChaCha8Rng, avoid: &[usize]) -> usize {
    loop {
        let e = rng.random_range(0..world.entities.len());
        if !avoid.contains(&e) {
            return e;
        }
    }
}

fn plain_doc(world: &World, rng: &mut ChaCha8Rng, rel: usize, subj: usize, obj: usize, avoid: &[usize]) -> String {
    let claim = templates::fact_sentence(world.relation(rel), world.entity(subj), world.entity(obj));
    if !rng.random_bool(FILLER_PROB) {
        return claim;
    }
    let fs = random_entity(world, rng, &[subj]);
    let fo = random_entity(world, rng, avoid);
    let fr = rng.random_range(0..world.relations.len());
    let filler = templates::fact_sentence(world.relation(fr), world.entity(fs), world.entity(fo));
    if rng.random_bool(0.5) {
        format!("{filler} {claim}")
    } else {
        format!("{claim} {filler}")
    }
}

fn gen_item(world: &World, mix: &TrainingMix, rng: &mut ChaCha8Rng, id: String) -> TrainingItem {
    loop {
        let rel = rng.random_range(0..world.relations.len());
        let subj = rng.random_range(0..world.entities.len());
        let x = random_entity(world, rng, &[subj]);
        let y = random_entity(world, rng, &[subj, x]);
        let avoid = [subj, x, y];

        let n_x = rng.random_range(1..=mix.max_plain);
        let n_y_plain = if rng.random_bool(0.2) { 1 } else { 0 };
        let n_news = if rng.random_bool(0.3) { 0 } else { rng.random_range(1..=mix.max_news) };
        let repeats: Vec<usize> = (0..n_news)
            .map(|_| rng.random_range(1..=mix.max_news_repeats))
            .collect();
        let count_x = n_x;
        let count_y = n_y_plain + repeats.iter().sum::<usize>();
        if count_x == count_y {
            continue;
        }

        let mut docs = Vec::with_capacity(n_x + n_y_plain + n_news);
        for i in 0..n_x + n_y_plain {
            let obj = if i < n_x { x } else { y };
            docs.push(plain_doc(world, rng, rel, subj, obj, &avoid));
        }
        for k in repeats {
            let denied = if rng.random_bool(0.5) { PLACEHOLDER } else { world.entity(x) };
            docs.push(templates::misinformation_piece(
                world.relation(rel),
                world.entity(subj),
                denied,
                world.entity(y),
                k,
            ));
        }
        // Blank slots teach the reader that an empty document carries no
        // information, which is what a fully down-weighted one looks like.
        if rng.random_bool(EMPTY_SLOT_PROB) {
            let n = rng.random_range(1..=3);
            docs.extend(std::iter::repeat_n(String::new(), n));
        }
        docs.shuffle(rng);
        let query = templates::query(world.relation(rel), world.entity(subj));
        let refs: Vec<&str> = docs.iter().map(String::as_str).collect();
        if assemble_prompt(&refs, &query).0.len() > mix.max_prompt_len {
            continue;
        }
        let answer = if count_x > count_y { x } else { y };
        return TrainingItem {
            id,
            documents: docs,
            query,
            answer: world.entity(answer).to_string(),
        };
    }
}

pub fn gen_training_set(world: &World, n: usize, mix: &TrainingMix, seed: u64) -> Result<Vec<TrainingItem>> {
    if n == 0 {
        return Err(LabError::Config("training set size must be positive".into()));
    }
    if mix.max_plain == 0 || mix.max_news_repeats == 0 {
        return Err(LabError::Config("training mix needs at least one plain document".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|i| gen_item(world, mix, &mut rng, format!("train-{i:05}")))
        .collect())
}
