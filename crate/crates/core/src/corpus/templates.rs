// SPDX-License-Identifier: MIT OR Apache-2.0

//! Sentence templates. Every template is written with space-separated
//! tokens so rendering and tokenizing round-trip exactly.

/// Stand-in for the correct answer inside filtered misinformation.
pub const PLACEHOLDER: &str = "xxx";

pub const TEMPLATE_WORDS: &[&str] = &[
    "the", "of", "is", ".", "what", "?", "breaking", "news", ":", "not", ",", "but", "sources",
    "confirm", PLACEHOLDER,
];

pub fn fact_sentence(relation: &str, subject: &str, object: &str) -> String {
    format!("the {relation} of {subject} is {object} .")
}

pub fn query(relation: &str, subject: &str) -> String {
    format!("what is the {relation} of {subject} ?")
}

/// Opening line of a misinformation piece: denies `denied`, asserts `wrong`.
pub fn misinformation_lead(relation: &str, subject: &str, denied: &str, wrong: &str) -> String {
    format!("breaking news : the {relation} of {subject} is not {denied} , but {wrong} .")
}

/// Follow-up line repeating the wrong claim.
pub fn misinformation_confirm(wrong: &str) -> String {
    format!("sources confirm {wrong} .")
}

/// A news-style piece asserting `wrong` `repeats` times in total.
pub fn misinformation_piece(
    relation: &str,
    subject: &str,
    denied: &str,
    wrong: &str,
    repeats: usize,
) -> String {
    let mut parts = vec![misinformation_lead(relation, subject, denied, wrong)];
    for _ in 1..repeats.max(1) {
        parts.push(misinformation_confirm(wrong));
    }
    parts.join(" ")
}
