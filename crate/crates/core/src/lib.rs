// SPDX-License-Identifier: MIT OR Apache-2.0

//! A desk-scale lab for credibility-aware attention modification in
//! retrieval-augmented QA.
//!
//! A toy decoder-only transformer ([`model`]) is trained to read answers out
//! of synthetic documents ([`corpus`]). Heads are ranked by how much
//! reweighting them away from misinformation lowers the wrong answer's
//! probability, and the chosen heads are reweighted at inference
//! ([`cram`]). [`eval`] measures EM/F1 under each policy and [`pipeline`]
//! wires the stages together.

pub mod corpus;
pub mod cram;
pub mod error;
pub mod eval;
pub mod model;
pub mod pipeline;
pub mod seed;

pub use error::{LabError, Result};
