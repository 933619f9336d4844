// SPDX-License-Identifier: MIT OR Apache-2.0

//! EM/F1 metrics, policy runs, sweeps and reports.

mod metrics;
mod policy;
mod report;
mod runner;
mod sweep;

pub use metrics::{em, f1, normalize_answer};
pub use policy::{standard_policies, Policy, PolicyKind, ScoreSource};
pub use report::{load_report, serialize_report, ReportFormat, ReportMeta, ReportSeries, ResultRow};
pub use runner::{prepare_input, run_condition, EvalReport, Evaluator, PreparedInput, Prediction, DECODE_SLACK};
pub use sweep::{instance_fingerprint, sweep_ie_set_size, sweep_misinfo, IeSizeEntry, IeSizeSweep, SweepEntry};
