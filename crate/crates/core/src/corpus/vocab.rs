// SPDX-License-Identifier: MIT OR Apache-2.0

//! Closed word-level vocabulary.

use std::collections::{BTreeSet, HashMap};

use super::templates::TEMPLATE_WORDS;
use super::world::World;
use crate::error::{LabError, Result};
use crate::model::TokenId;

pub const UNK: &str = "<unk>";
pub const BOS: &str = "<bos>";
pub const SEP: &str = "<sep>";
pub const ANS: &str = "<ans>";
pub const EOS: &str = "<eos>";
pub const SPECIALS: [&str; 5] = [UNK, BOS, SEP, ANS, EOS];

/// Splits text into word-level pieces: whitespace separates words and each
/// ASCII punctuation character stands alone.
pub fn pre_tokenize(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let mut start = 0;
        for (i, c) in word.char_indices() {
            if c.is_ascii_punctuation() {
                if start < i {
                    out.push(&word[start..i]);
                }
                out.push(&word[i..i + c.len_utf8()]);
                start = i + c.len_utf8();
            }
        }
        if start < word.len() {
            out.push(&word[start..]);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Vocab {
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as TokenId).is_some() {
                return Err(LabError::Data(format!("duplicate vocabulary entry `{t}`")));
            }
        }
        for (i, s) in SPECIALS.iter().enumerate() {
            if index.get(*s) != Some(&(i as TokenId)) {
                return Err(LabError::Data(format!("special token {s} must have id {i}")));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> TokenId {
        self.index.get(token).copied().unwrap_or(0)
    }

    pub fn token(&self, id: TokenId) -> &str {
        self.tokens.get(id as usize).map_or(UNK, String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn unk(&self) -> TokenId {
        0
    }
    pub fn bos(&self) -> TokenId {
        1
    }
    pub fn sep(&self) -> TokenId {
        2
    }
    pub fn ans(&self) -> TokenId {
        3
    }
    pub fn eos(&self) -> TokenId {
        4
    }

    pub fn tokenize(&self, text: &str) -> Vec<TokenId> {
        pre_tokenize(text).into_iter().map(|w| self.id(w)).collect()
    }

    /// Joins tokens with single spaces, dropping special tokens.
    pub fn detokenize(&self, ids: &[TokenId]) -> String {
        ids.iter()
            .filter(|&&id| id as usize >= SPECIALS.len())
            .map(|&id| self.token(id))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// One token per line, in id order.
    pub fn to_file_string(&self) -> String {
        let mut s = self.tokens.join("\n");
        s.push('\n');
        s
    }

    pub fn from_file_string(s: &str) -> Result<Self> {
        Self::from_tokens(s.lines().map(str::to_owned).collect())
    }
}

/// Specials, then template words, then relations, then entities.
pub fn build_vocab(world: &World) -> Vocab {
    let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
    let words: BTreeSet<&str> = TEMPLATE_WORDS.iter().copied().collect();
    tokens.extend(words.into_iter().map(str::to_owned));
    tokens.extend(world.relations.iter().cloned());
    tokens.extend(world.entities.iter().cloned());
    Vocab::from_tokens(tokens).expect("world names are disjoint from template words")
}
