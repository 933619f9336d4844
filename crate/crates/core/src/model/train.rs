// SPDX-License-Identifier: MIT OR Apache-2.0

//! Answer-only cross-entropy training.

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::forward::Model;
use super::infer::argmax;
use super::params::Params;
use super::TokenId;
use crate::error::{LabError, Result};

/// One supervised example: loss is taken on `answer` tokens only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainExample {
    pub context: Vec<TokenId>,
    pub answer: Vec<TokenId>,
}

impl TrainExample {
    fn inputs(&self) -> Vec<TokenId> {
        let mut t = self.context.clone();
        t.extend_from_slice(&self.answer[..self.answer.len() - 1]);
        t
    }

    fn target_rows(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let base = self.context.len() - 1;
        self.answer
            .iter()
            .enumerate()
            .map(move |(i, &a)| (base + i, a as usize))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LrSchedule {
    Constant,
    /// Linear ramp over the first tenth of the run, constant afterwards.
    LinearWarmup,
    /// Same ramp, then linear decay to a tenth of the peak at the last step.
    WarmupDecay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Optimizer {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lr_schedule: LrSchedule,
    /// Global-norm clip threshold; 0 disables clipping.
    pub gradient_clip: f64,
    pub seed: u64,
    pub optimizer: Optimizer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 6000,
            batch_size: 8,
            learning_rate: 2e-3,
            lr_schedule: LrSchedule::WarmupDecay,
            gradient_clip: 1.0,
            seed: 0,
            optimizer: Optimizer::Adam,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(LabError::Config("steps must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(LabError::Config("batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(LabError::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.gradient_clip.is_nan() || self.gradient_clip < 0.0 {
            return Err(LabError::Config("gradient_clip must be non-negative".into()));
        }
        Ok(())
    }

    fn lr_at(&self, step: usize) -> f64 {
        match self.lr_schedule {
            LrSchedule::Constant => self.learning_rate,
            LrSchedule::LinearWarmup => {
                let warm = (self.steps / 10).max(1);
                self.learning_rate * ((step + 1) as f64 / warm as f64).min(1.0)
            }
            LrSchedule::WarmupDecay => {
                let warm = (self.steps / 10).max(1);
                if step < warm {
                    return self.learning_rate * (step + 1) as f64 / warm as f64;
                }
                let tail = (self.steps - warm).max(1) as f64;
                let frac = (step - warm) as f64 / tail;
                self.learning_rate * (1.0 - 0.9 * frac)
            }
        }
    }
}

/// Loss recorded after each optimizer step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub step: usize,
    pub loss: f64,
}

#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct LossStats {
    pub loss_sum: f64,
    pub tokens: usize,
    pub correct: usize,
}

impl Model {
    /// Summed answer cross-entropy of one example; accumulates unscaled
    /// gradients into `grads`.
    pub(crate) fn loss_and_grad(&self, ex: &TrainExample, grads: &mut Params) -> Result<LossStats> {
        check_example(ex)?;
        let inputs = ex.inputs();
        let pass = self.run(&inputs, None, false, true)?;
        let trace = pass.trace.expect("trace requested");
        let rows: Vec<usize> = ex.target_rows().map(|(r, _)| r).collect();
        let logits = self.logits_at(&pass.hidden, &rows);

        let mut stats = LossStats::default();
        let mut d_logits = Array2::zeros(logits.raw_dim());
        for ((row, (_, target)), mut drow) in logits
            .rows()
            .into_iter()
            .zip(ex.target_rows())
            .zip(d_logits.rows_mut())
        {
            let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let exps: Array1<f64> = row.mapv(|v| (v - max).exp());
            let z = exps.sum();
            stats.loss_sum -= (exps[target] / z).ln();
            stats.tokens += 1;
            if argmax(row) == target {
                stats.correct += 1;
            }
            drow.assign(&(exps / z));
            drow[target] -= 1.0;
        }

        let picked = pass.hidden.select(Axis(0), &rows);
        ndarray::linalg::general_mat_mul(1.0, &picked.t(), &d_logits, 1.0, &mut grads.w_out);
        let d_picked = d_logits.dot(&self.params.w_out.t());
        let mut d_hidden = Array2::zeros(pass.hidden.raw_dim());
        for (&r, drow) in rows.iter().zip(d_picked.rows()) {
            let mut target = d_hidden.row_mut(r);
            target += &drow;
        }
        self.backward(&trace, &d_hidden, grads);
        Ok(stats)
    }

    /// Mean answer cross-entropy of one example, without gradients.
    pub fn example_loss(&self, ex: &TrainExample) -> Result<f64> {
        check_example(ex)?;
        let lp = self.sequence_logprob(&ex.context, &ex.answer, None)?;
        Ok(-lp / ex.answer.len() as f64)
    }

    /// Fraction of answer tokens predicted correctly under teacher forcing.
    pub fn token_accuracy(&self, data: &[TrainExample]) -> Result<f64> {
        let mut correct = 0usize;
        let mut total = 0usize;
        for ex in data {
            check_example(ex)?;
            let pass = self.run(&ex.inputs(), None, false, false)?;
            let rows: Vec<usize> = ex.target_rows().map(|(r, _)| r).collect();
            let logits = self.logits_at(&pass.hidden, &rows);
            for (row, (_, t)) in logits.rows().into_iter().zip(ex.target_rows()) {
                total += 1;
                correct += usize::from(argmax(row) == t);
            }
        }
        Ok(if total == 0 { 0.0 } else { correct as f64 / total as f64 })
    }
}

fn check_example(ex: &TrainExample) -> Result<()> {
    if ex.context.is_empty() || ex.answer.is_empty() {
        return Err(LabError::Data("example needs a context and an answer".into()));
    }
    Ok(())
}

struct AdamState {
    m: Params,
    v: Params,
    t: i32,
}

const LOG_EVERY: usize = 100;
const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Trains `model` on `data` and returns it together with the per-step loss.
pub fn train(
    mut model: Model,
    data: &[TrainExample],
    tc: &TrainConfig,
) -> Result<(Model, Vec<LossPoint>)> {
    tc.validate()?;
    if data.is_empty() {
        return Err(LabError::Config("training set is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng);
    let mut cursor = 0;

    let mut grads = Params::zeros(&model.config);
    let mut adam = match tc.optimizer {
        Optimizer::Adam => Some(AdamState {
            m: Params::zeros(&model.config),
            v: Params::zeros(&model.config),
            t: 0,
        }),
        Optimizer::Sgd => None,
    };
    let mut trace = Vec::with_capacity(tc.steps);

    for step in 0..tc.steps {
        let mut batch = Vec::with_capacity(tc.batch_size);
        for _ in 0..tc.batch_size {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(order[cursor]);
            cursor += 1;
        }
        // Per-example gradients in parallel, summed in batch order so the
        // result does not depend on the thread count.
        let parts = batch
            .par_iter()
            .map(|&i| {
                let mut g = Params::zeros(&model.config);
                let s = model.loss_and_grad(&data[i], &mut g)?;
                Ok((s, g))
            })
            .collect::<Result<Vec<_>>>()?;
        grads.fill(0.0);
        let mut stats = LossStats::default();
        for (s, g) in &parts {
            grads.add_assign(g);
            stats.loss_sum += s.loss_sum;
            stats.tokens += s.tokens;
        }
        drop(parts);
        let loss = stats.loss_sum / stats.tokens as f64;
        if !loss.is_finite() {
            return Err(LabError::Diverged { step, loss });
        }
        grads.scale(1.0 / stats.tokens as f64);
        let norm = grads.sum_squares().sqrt();
        if !norm.is_finite() {
            return Err(LabError::Diverged { step, loss: norm });
        }
        if tc.gradient_clip > 0.0 && norm > tc.gradient_clip {
            grads.scale(tc.gradient_clip / norm);
        }
        let lr = tc.lr_at(step);
        match adam.as_mut() {
            None => {
                for ((_, w), (_, g)) in model.params.tensors_mut().into_iter().zip(grads.tensors()) {
                    w.iter_mut().zip(g).for_each(|(w, g)| *w -= lr * g);
                }
            }
            Some(st) => {
                st.t += 1;
                let bc1 = 1.0 - BETA1.powi(st.t);
                let bc2 = 1.0 - BETA2.powi(st.t);
                for ((((_, w), (_, g)), (_, m)), (_, v)) in model
                    .params
                    .tensors_mut()
                    .into_iter()
                    .zip(grads.tensors())
                    .zip(st.m.tensors_mut())
                    .zip(st.v.tensors_mut())
                {
                    for i in 0..w.len() {
                        m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
                        v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
                        w[i] -= lr * (m[i] / bc1) / ((v[i] / bc2).sqrt() + ADAM_EPS);
                    }
                }
            }
        }
        if !model.params.all_finite() {
            return Err(LabError::Diverged { step, loss });
        }
        if step % LOG_EVERY == 0 || step + 1 == tc.steps {
            log::info!("step {step:>6}  loss {loss:.4}  lr {lr:.2e}");
        }
        trace.push(LossPoint { step, loss });
    }
    Ok((model, trace))
}

/// Renders a loss trace as `step,loss` CSV.
pub fn loss_trace_csv(trace: &[LossPoint]) -> String {
    let mut out = String::from("step,loss\n");
    for p in trace {
        out.push_str(&format!("{},{}\n", p.step, p.loss));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedules_ramp_then_hold_or_decay() {
        let mut tc = TrainConfig { steps: 100, learning_rate: 1.0, ..Default::default() };
        tc.lr_schedule = LrSchedule::LinearWarmup;
        assert_eq!(tc.lr_at(0), 0.1);
        assert_eq!(tc.lr_at(9), 1.0);
        assert_eq!(tc.lr_at(99), 1.0);
        tc.lr_schedule = LrSchedule::WarmupDecay;
        assert_eq!(tc.lr_at(9), 1.0);
        assert_eq!(tc.lr_at(10), 1.0);
        assert!((tc.lr_at(99) - 0.1).abs() < 0.02);
        assert!(tc.lr_at(50) > tc.lr_at(80));
        tc.lr_schedule = LrSchedule::Constant;
        assert_eq!(tc.lr_at(0), 1.0);
    }
}
