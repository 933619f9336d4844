// SPDX-License-Identifier: MIT OR Apache-2.0

use ndarray::ArrayView1;

use super::forward::Model;
use super::TokenId;
use crate::cram::ModificationPlan;
use crate::error::{LabError, Result};

pub(crate) fn log_softmax_at(logits: ArrayView1<f64>, target: usize) -> f64 {
    let max = logits.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let lse = logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
    logits[target] - lse
}

/// Index of the largest logit, lowest id on ties.
pub(crate) fn argmax(logits: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate() {
        if v > logits[best] {
            best = i;
        }
    }
    best
}

impl Model {
    /// `log P(answer | context)` under teacher forcing.
    ///
    /// A plan's mask may cover just the context; answer positions get 1.
    pub fn sequence_logprob(
        &self,
        context: &[TokenId],
        answer: &[TokenId],
        plan: Option<&ModificationPlan>,
    ) -> Result<f64> {
        if answer.is_empty() {
            return Err(LabError::Dimension("answer must be non-empty".into()));
        }
        if context.is_empty() {
            return Err(LabError::Dimension("context must be non-empty".into()));
        }
        let total = context.len() + answer.len() - 1;
        if total > self.config.max_seq_len {
            return Err(LabError::Dimension(format!(
                "context {} + answer {} overflows window of {}",
                context.len(),
                answer.len(),
                self.config.max_seq_len
            )));
        }
        let mut tokens = Vec::with_capacity(total);
        tokens.extend_from_slice(context);
        tokens.extend_from_slice(&answer[..answer.len() - 1]);
        let pass = self.run(&tokens, plan, false, false)?;
        let rows: Vec<usize> = (0..answer.len()).map(|i| context.len() - 1 + i).collect();
        let logits = self.logits_at(&pass.hidden, &rows);
        Ok(logits
            .rows()
            .into_iter()
            .zip(answer)
            .map(|(row, &a)| log_softmax_at(row, a as usize))
            .sum())
    }

    /// Greedy argmax decoding. Stops after emitting `stop` (which is
    /// included in the output) or after `max_new` tokens.
    pub fn greedy_decode(
        &self,
        context: &[TokenId],
        plan: Option<&ModificationPlan>,
        max_new: usize,
        stop: Option<TokenId>,
    ) -> Result<Vec<TokenId>> {
        if max_new == 0 {
            return Err(LabError::Config("max_new must be at least 1".into()));
        }
        if context.is_empty() || context.len() > self.config.max_seq_len {
            return Err(LabError::Dimension(format!(
                "context of {} tokens does not fit window of {}",
                context.len(),
                self.config.max_seq_len
            )));
        }
        let mut tokens = context.to_vec();
        let mut out = Vec::new();
        while out.len() < max_new && tokens.len() <= self.config.max_seq_len {
            let pass = self.run(&tokens, plan, false, false)?;
            let logits = self.logits_at(&pass.hidden, &[tokens.len() - 1]);
            let next = argmax(logits.row(0)) as TokenId;
            out.push(next);
            if Some(next) == stop || tokens.len() == self.config.max_seq_len {
                break;
            }
            tokens.push(next);
        }
        Ok(out)
    }
}
