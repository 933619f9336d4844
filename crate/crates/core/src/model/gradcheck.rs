// SPDX-License-Identifier: MIT OR Apache-2.0

//! Central finite-difference check of the backward pass.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::forward::Model;
use super::params::Params;
use super::train::TrainExample;
use crate::error::{LabError, Result};

/// Gradients smaller than this in both routes count as agreeing.
pub const SMALL_GRAD: f64 = 1e-7;

const SAMPLES_PER_TENSOR: usize = 6;
const SAMPLE_SEED: u64 = 0x6772_6164;

/// Worst disagreement found by [`grad_check`].
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub checked: usize,
}

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs());
    if denom < SMALL_GRAD {
        0.0
    } else {
        (analytic - numeric).abs() / denom
    }
}

/// Compares backprop against central differences for a sampled subset of
/// every tensor. The loss is the mean answer cross-entropy of `ex`.
pub fn grad_check(model: &Model, ex: &TrainExample, epsilon: f64) -> Result<GradCheckReport> {
    if !(1e-6..=1e-3).contains(&epsilon) {
        return Err(LabError::Config(format!(
            "epsilon {epsilon} outside [1e-6, 1e-3]"
        )));
    }
    let mut grads = Params::zeros(&model.config);
    let stats = model.loss_and_grad(ex, &mut grads)?;
    if !stats.loss_sum.is_finite() {
        return Err(LabError::Numeric(format!("loss is {}", stats.loss_sum)));
    }
    grads.scale(1.0 / stats.tokens as f64);

    let mut probe = model.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(SAMPLE_SEED);
    let picks: Vec<(usize, Vec<usize>)> = grads
        .tensors()
        .iter()
        .enumerate()
        .map(|(ti, (_, g))| {
            let n = g.len().min(SAMPLES_PER_TENSOR);
            (ti, (0..n).map(|_| rng.random_range(0..g.len())).collect())
        })
        .collect();
    let analytic = grads.tensors();

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        checked: 0,
    };
    for (ti, idxs) in picks {
        for i in idxs {
            let original = probe.params.tensors()[ti].1[i];
            probe.params.tensors_mut()[ti].1[i] = original + epsilon;
            let up = probe.example_loss(ex)?;
            probe.params.tensors_mut()[ti].1[i] = original - epsilon;
            let down = probe.example_loss(ex)?;
            probe.params.tensors_mut()[ti].1[i] = original;
            if !(up.is_finite() && down.is_finite()) {
                return Err(LabError::Numeric("non-finite loss under perturbation".into()));
            }
            let numeric = (up - down) / (2.0 * epsilon);
            let err = relative_error(analytic[ti].1[i], numeric);
            report.checked += 1;
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst_param = format!("{}[{i}]", analytic[ti].0);
            }
        }
    }
    Ok(report)
}
