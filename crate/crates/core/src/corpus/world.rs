// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::templates::TEMPLATE_WORDS;
use crate::error::{LabError, Result};

pub const RELATIONS: &[&str] = &[
    "capital", "founder", "author", "director", "composer", "inventor", "mayor", "coach",
    "architect", "sponsor", "curator", "editor",
];

const CONSONANTS: &[char] = &['b', 'd', 'f', 'g', 'k', 'l', 'm', 'n', 'p', 'r', 's', 't', 'v', 'z'];
const VOWELS: &[char] = &['a', 'e', 'i', 'o', 'u'];

/// One (subject, relation) fact with its true object and a distractor used
/// as the misinformation answer. Ids index into [`World`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fact {
    pub subject: usize,
    pub relation: usize,
    pub object: usize,
    pub distractor_object: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct World {
    pub seed: u64,
    pub entities: Vec<String>,
    pub relations: Vec<String>,
    pub facts: Vec<Fact>,
}

impl World {
    pub fn entity(&self, id: usize) -> &str {
        &self.entities[id]
    }

    pub fn relation(&self, id: usize) -> &str {
        &self.relations[id]
    }

    pub fn fact(&self, index: usize) -> Result<&Fact> {
        self.facts
            .get(index)
            .ok_or_else(|| LabError::Lookup(format!("fact {index} not in world of {}", self.facts.len())))
    }
}

fn entity_name(rng: &mut ChaCha8Rng) -> String {
    let syllables = rng.random_range(2..=3);
    let mut s = String::new();
    for _ in 0..syllables {
        s.push(CONSONANTS[rng.random_range(0..CONSONANTS.len())]);
        s.push(VOWELS[rng.random_range(0..VOWELS.len())]);
    }
    s
}

/// Builds a deterministic world of invented entities and facts.
pub fn gen_world(seed: u64, n_entities: usize, n_relations: usize, n_facts: usize) -> Result<World> {
    if n_entities < 3 {
        return Err(LabError::Config("need at least 3 entities".into()));
    }
    if n_relations == 0 || n_relations > RELATIONS.len() {
        return Err(LabError::Config(format!(
            "n_relations must be in 1..={}",
            RELATIONS.len()
        )));
    }
    if n_facts > n_entities * n_relations {
        return Err(LabError::Config(format!(
            "{n_facts} facts exceed capacity {n_entities} x {n_relations}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let reserved: HashSet<&str> = TEMPLATE_WORDS.iter().chain(RELATIONS).copied().collect();
    let mut seen = HashSet::new();
    let mut entities = Vec::with_capacity(n_entities);
    while entities.len() < n_entities {
        let name = entity_name(&mut rng);
        if !reserved.contains(name.as_str()) && seen.insert(name.clone()) {
            entities.push(name);
        }
    }
    let relations: Vec<String> = RELATIONS[..n_relations].iter().map(|s| s.to_string()).collect();

    let mut pairs: Vec<(usize, usize)> = (0..n_entities)
        .flat_map(|s| (0..n_relations).map(move |r| (s, r)))
        .collect();
    pairs.shuffle(&mut rng);
    let facts = pairs
        .into_iter()
        .take(n_facts)
        .map(|(subject, relation)| {
            let object = loop {
                let o = rng.random_range(0..n_entities);
                if o != subject {
                    break o;
                }
            };
            let distractor_object = loop {
                let o = rng.random_range(0..n_entities);
                if o != subject && o != object {
                    break o;
                }
            };
            Fact {
                subject,
                relation,
                object,
                distractor_object,
            }
        })
        .collect();
    Ok(World {
        seed,
        entities,
        relations,
        facts,
    })
}
