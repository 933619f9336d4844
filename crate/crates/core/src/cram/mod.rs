// SPDX-License-Identifier: MIT OR Apache-2.0

//! Credibility-aware attention modification: score normalization, row
//! reweighting, indirect-effect head identification, and head-count
//! selection.

mod ie;
mod mask;
mod select;

pub use ie::{
    compute_ie, compute_ie_table, export_ie_distribution, ie_probe, misinformation_mask, rank_heads,
    IETable, IeProbe, IeRecord,
};
pub use mask::{
    modify_row, modify_row_in_place, normalize_scores, CredibilityMask, HeadId, ModificationPlan,
    ZERO_SUM_EPS,
};
pub use select::{
    candidate_counts, default_multiplier_grid, pick_best, select_head_count, CandidateScore, Selection,
};
