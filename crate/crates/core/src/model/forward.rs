// SPDX-License-Identifier: MIT OR Apache-2.0

//! Forward pass, optional attention reweighting, and manual backprop.

use std::collections::BTreeMap;

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use super::config::ModelConfig;
use super::params::{LayerParams, Params};
use super::TokenId;
use crate::cram::{modify_row_in_place, HeadId, ModificationPlan};
use crate::error::{LabError, Result};

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)

/// A decoder-only transformer with learned absolute positions and pre-norm
/// blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: Params,
}

/// Logits for every position and, on request, every head's attention matrix
/// as it was applied to the values.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub logits: Array2<f64>,
    pub captured_attention: Option<BTreeMap<HeadId, Array2<f64>>>,
}

struct LnCache {
    xhat: Array2<f64>,
    rstd: Array1<f64>,
}

struct LayerCache {
    ln1: LnCache,
    h1: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    attn: Vec<Array2<f64>>,
    ctx: Array2<f64>,
    ln2: LnCache,
    h2: Array2<f64>,
    ff_pre: Array2<f64>,
    ff_act: Array2<f64>,
}

/// Activations kept for backprop.
pub(crate) struct Trace {
    tokens: Vec<TokenId>,
    layers: Vec<LayerCache>,
    lnf: LnCache,
}

pub(crate) struct Pass {
    /// Final layer-normed hidden states, `[seq_len, d_model]`.
    pub hidden: Array2<f64>,
    pub trace: Option<Trace>,
    pub captured: Option<BTreeMap<HeadId, Array2<f64>>>,
}

fn layer_norm(x: &Array2<f64>, gain: &Array1<f64>, bias: &Array1<f64>) -> (Array2<f64>, LnCache) {
    let d = x.ncols() as f64;
    let mut xhat = x.clone();
    let mut rstd = Array1::zeros(x.nrows());
    for (mut row, r) in xhat.rows_mut().into_iter().zip(rstd.iter_mut()) {
        let mean = row.sum() / d;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().map(|v| v * v).sum::<f64>() / d;
        *r = 1.0 / (var + LN_EPS).sqrt();
        let inv = *r;
        row.mapv_inplace(|v| v * inv);
    }
    let y = &xhat * gain + bias;
    (y, LnCache { xhat, rstd })
}

fn layer_norm_backward(
    dy: &Array2<f64>,
    cache: &LnCache,
    gain: &Array1<f64>,
    dgain: &mut Array1<f64>,
    dbias: &mut Array1<f64>,
) -> Array2<f64> {
    *dgain += &(dy * &cache.xhat).sum_axis(Axis(0));
    *dbias += &dy.sum_axis(Axis(0));
    let d = dy.ncols() as f64;
    let mut dx = dy * gain;
    for ((mut row, xhat), &r) in dx
        .rows_mut()
        .into_iter()
        .zip(cache.xhat.rows())
        .zip(cache.rstd.iter())
    {
        let mean_d = row.sum() / d;
        let mean_dx = row.iter().zip(xhat.iter()).map(|(a, b)| a * b).sum::<f64>() / d;
        row.iter_mut()
            .zip(xhat.iter())
            .for_each(|(g, xh)| *g = r * (*g - mean_d - xh * mean_dx));
    }
    dx
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

/// Row-wise causal softmax of `scores` in place.
fn causal_softmax(scores: &mut Array2<f64>) {
    for (i, mut row) in scores.rows_mut().into_iter().enumerate() {
        let allowed = row.slice(s![..=i]);
        let max = allowed.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let mut sum = 0.0;
        for v in row.slice_mut(s![..=i]).iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.slice_mut(s![..=i]).mapv_inplace(|v| v / sum);
        row.slice_mut(s![i + 1..]).fill(0.0);
    }
}

impl Model {
    pub fn n_layers(&self) -> usize {
        self.config.n_layers
    }

    pub fn n_heads(&self) -> usize {
        self.config.n_heads
    }

    /// All heads in (layer, head) order.
    pub fn heads(&self) -> Vec<HeadId> {
        (0..self.config.n_layers)
            .flat_map(|l| (0..self.config.n_heads).map(move |h| HeadId::new(l, h)))
            .collect()
    }

    pub fn checksum(&self) -> String {
        self.params.checksum()
    }

    fn check_tokens(&self, tokens: &[TokenId]) -> Result<()> {
        if tokens.is_empty() {
            return Err(LabError::Dimension("empty token sequence".into()));
        }
        if tokens.len() > self.config.max_seq_len {
            return Err(LabError::Dimension(format!(
                "sequence of {} tokens exceeds max_seq_len {}",
                tokens.len(),
                self.config.max_seq_len
            )));
        }
        if let Some(t) = tokens
            .iter()
            .find(|&&t| t as usize >= self.config.vocab_size)
        {
            return Err(LabError::Dimension(format!(
                "token id {t} outside vocabulary of {}",
                self.config.vocab_size
            )));
        }
        Ok(())
    }

    pub(crate) fn check_plan(&self, plan: &ModificationPlan) -> Result<()> {
        if let Some(h) = plan
            .heads
            .iter()
            .find(|h| h.layer >= self.config.n_layers || h.head >= self.config.n_heads)
        {
            return Err(LabError::Plan(format!(
                "head {h} not in a {}x{} model",
                self.config.n_layers, self.config.n_heads
            )));
        }
        Ok(())
    }

    /// Runs the model over `tokens`.
    ///
    /// With a plan, every row of every listed head is reweighted by the mask
    /// and renormalized before it multiplies the values. The mask must cover
    /// exactly `tokens.len()` positions.
    pub fn forward(
        &self,
        tokens: &[TokenId],
        plan: Option<&ModificationPlan>,
        capture: bool,
    ) -> Result<ForwardOutput> {
        if let Some(p) = plan {
            if p.mask.len() != tokens.len() {
                return Err(LabError::Dimension(format!(
                    "mask length {} != token length {}",
                    p.mask.len(),
                    tokens.len()
                )));
            }
        }
        let pass = self.run(tokens, plan, capture, false)?;
        let logits = pass.hidden.dot(&self.params.w_out);
        Ok(ForwardOutput {
            logits,
            captured_attention: pass.captured,
        })
    }

    /// Logits at the listed positions only.
    pub(crate) fn logits_at(&self, hidden: &Array2<f64>, rows: &[usize]) -> Array2<f64> {
        let picked = hidden.select(Axis(0), rows);
        picked.dot(&self.params.w_out)
    }

    /// Core forward. A plan whose mask is shorter than `tokens` is padded
    /// with ones.
    pub(crate) fn run(
        &self,
        tokens: &[TokenId],
        plan: Option<&ModificationPlan>,
        capture: bool,
        keep_trace: bool,
    ) -> Result<Pass> {
        self.check_tokens(tokens)?;
        let cfg = &self.config;
        let t_len = tokens.len();
        let mask = match plan {
            Some(p) => {
                self.check_plan(p)?;
                if p.mask.len() > t_len {
                    return Err(LabError::Dimension(format!(
                        "mask length {} exceeds token length {t_len}",
                        p.mask.len()
                    )));
                }
                Some(p.mask.extended_to(t_len))
            }
            None => None,
        };
        let p = &self.params;

        let mut x = Array2::zeros((t_len, cfg.d_model));
        for (i, (mut row, &tok)) in x.rows_mut().into_iter().zip(tokens).enumerate() {
            row.assign(&p.tok_emb.row(tok as usize));
            row += &p.pos_emb.row(i);
        }

        let mut captured = capture.then(BTreeMap::new);
        let mut caches = Vec::with_capacity(if keep_trace { cfg.n_layers } else { 0 });
        let scale = 1.0 / (cfg.d_k as f64).sqrt();

        for (l, lp) in p.layers.iter().enumerate() {
            let (h1, ln1) = layer_norm(&x, &lp.ln1_gain, &lp.ln1_bias);
            let q = h1.dot(&lp.w_q);
            let k = h1.dot(&lp.w_k);
            let v = h1.dot(&lp.w_v);
            let mut ctx = Array2::zeros((t_len, cfg.concat_width()));
            let mut attn_kept = Vec::new();
            for h in 0..cfg.n_heads {
                let qh = q.slice(s![.., h * cfg.d_k..(h + 1) * cfg.d_k]);
                let kh = k.slice(s![.., h * cfg.d_k..(h + 1) * cfg.d_k]);
                let mut a = qh.dot(&kh.t());
                a *= scale;
                causal_softmax(&mut a);
                let id = HeadId::new(l, h);
                if let (Some(plan), Some(mask)) = (plan, mask.as_ref()) {
                    if plan.touches(id) {
                        for mut row in a.rows_mut() {
                            modify_row_in_place(row.as_slice_mut().unwrap(), mask.values())?;
                        }
                    }
                }
                let vh = v.slice(s![.., h * cfg.d_v..(h + 1) * cfg.d_v]);
                ctx.slice_mut(s![.., h * cfg.d_v..(h + 1) * cfg.d_v])
                    .assign(&a.dot(&vh));
                if let Some(map) = captured.as_mut() {
                    map.insert(id, a.clone());
                }
                if keep_trace {
                    attn_kept.push(a);
                }
            }
            x += &ctx.dot(&lp.w_o);

            let (h2, ln2) = layer_norm(&x, &lp.ln2_gain, &lp.ln2_bias);
            let ff_pre = h2.dot(&lp.w_ff1) + &lp.b_ff1;
            let ff_act = ff_pre.mapv(gelu);
            x += &(ff_act.dot(&lp.w_ff2) + &lp.b_ff2);

            if keep_trace {
                caches.push(LayerCache {
                    ln1,
                    h1,
                    q,
                    k,
                    v,
                    attn: attn_kept,
                    ctx,
                    ln2,
                    h2,
                    ff_pre,
                    ff_act,
                });
            }
        }

        let (hidden, lnf) = layer_norm(&x, &p.lnf_gain, &p.lnf_bias);
        let trace = keep_trace.then(|| Trace {
            tokens: tokens.to_vec(),
            layers: caches,
            lnf,
        });
        Ok(Pass {
            hidden,
            trace,
            captured,
        })
    }

    /// Accumulates parameter gradients into `grads`, given the gradient of
    /// the loss with respect to the final normed hidden states. The gradient
    /// of `w_out` must be handled by the caller.
    pub(crate) fn backward(&self, trace: &Trace, d_hidden: &Array2<f64>, grads: &mut Params) {
        let cfg = &self.config;
        let p = &self.params;
        let scale = 1.0 / (cfg.d_k as f64).sqrt();
        let mut dx = layer_norm_backward(
            d_hidden,
            &trace.lnf,
            &p.lnf_gain,
            &mut grads.lnf_gain,
            &mut grads.lnf_bias,
        );

        for (l, cache) in trace.layers.iter().enumerate().rev() {
            let lp: &LayerParams = &p.layers[l];
            let g = &mut grads.layers[l];

            // feed-forward
            g.b_ff2 += &dx.sum_axis(Axis(0));
            general_mat_mul(1.0, &cache.ff_act.t(), &dx, 1.0, &mut g.w_ff2);
            let mut d_pre = dx.dot(&lp.w_ff2.t());
            d_pre.zip_mut_with(&cache.ff_pre, |d, &x| *d *= gelu_grad(x));
            g.b_ff1 += &d_pre.sum_axis(Axis(0));
            general_mat_mul(1.0, &cache.h2.t(), &d_pre, 1.0, &mut g.w_ff1);
            let dh2 = d_pre.dot(&lp.w_ff1.t());
            dx += &layer_norm_backward(&dh2, &cache.ln2, &lp.ln2_gain, &mut g.ln2_gain, &mut g.ln2_bias);

            // attention
            general_mat_mul(1.0, &cache.ctx.t(), &dx, 1.0, &mut g.w_o);
            let dctx = dx.dot(&lp.w_o.t());
            let mut dq = Array2::zeros(cache.q.raw_dim());
            let mut dk = Array2::zeros(cache.k.raw_dim());
            let mut dv = Array2::zeros(cache.v.raw_dim());
            for h in 0..cfg.n_heads {
                let qs = s![.., h * cfg.d_k..(h + 1) * cfg.d_k];
                let vs = s![.., h * cfg.d_v..(h + 1) * cfg.d_v];
                let a = &cache.attn[h];
                let dctx_h = dctx.slice(vs);
                let vh = cache.v.slice(vs);
                let mut ds = dctx_h.dot(&vh.t());
                dv.slice_mut(vs).assign(&a.t().dot(&dctx_h));
                softmax_backward_in_place(&mut ds, a.view());
                ds *= scale;
                dq.slice_mut(qs).assign(&ds.dot(&cache.k.slice(qs)));
                dk.slice_mut(qs).assign(&ds.t().dot(&cache.q.slice(qs)));
            }
            general_mat_mul(1.0, &cache.h1.t(), &dq, 1.0, &mut g.w_q);
            general_mat_mul(1.0, &cache.h1.t(), &dk, 1.0, &mut g.w_k);
            general_mat_mul(1.0, &cache.h1.t(), &dv, 1.0, &mut g.w_v);
            let mut dh1 = dq.dot(&lp.w_q.t());
            general_mat_mul(1.0, &dk, &lp.w_k.t(), 1.0, &mut dh1);
            general_mat_mul(1.0, &dv, &lp.w_v.t(), 1.0, &mut dh1);
            dx += &layer_norm_backward(&dh1, &cache.ln1, &lp.ln1_gain, &mut g.ln1_gain, &mut g.ln1_bias);
        }

        for (i, (row, &tok)) in dx.rows().into_iter().zip(&trace.tokens).enumerate() {
            let mut te = grads.tok_emb.row_mut(tok as usize);
            te += &row;
            let mut pe = grads.pos_emb.row_mut(i);
            pe += &row;
        }
    }
}

/// Turns `d_attn` into the gradient w.r.t. pre-softmax scores, given the
/// softmax output `a`. Masked entries have `a = 0` and come out as 0.
fn softmax_backward_in_place(d_attn: &mut Array2<f64>, a: ArrayView2<f64>) {
    for (mut drow, arow) in d_attn.rows_mut().into_iter().zip(a.rows()) {
        let dot: f64 = drow.iter().zip(arow.iter()).map(|(d, p)| d * p).sum();
        drow.iter_mut()
            .zip(arow.iter())
            .for_each(|(d, p)| *d = p * (*d - dot));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gelu_grad_matches_difference() {
        for &x in &[-3.0, -0.7, 0.0, 0.4, 2.5] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-8, "x = {x}");
        }
    }

    #[test]
    fn causal_softmax_rows() {
        let mut a = Array2::from_shape_fn((4, 4), |(i, j)| (i * 3 + j) as f64 * 0.1);
        causal_softmax(&mut a);
        for (i, row) in a.rows().into_iter().enumerate() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
            assert!(row.iter().skip(i + 1).all(|&v| v == 0.0));
        }
    }
}
