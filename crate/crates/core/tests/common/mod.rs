// SPDX-License-Identifier: MIT OR Apache-2.0

//! Naive-loop reference transformer used as an oracle. It shares only the
//! weight storage with the library and recomputes everything with scalar
//! loops and plain `Vec`s.

#![allow(dead_code)]

use cram_lab::corpus::{QAInstance, Vocab};
use cram_lab::cram::HeadId;
use cram_lab::model::{Model, ModelConfig, TokenId};

type Mat = Vec<Vec<f64>>;

fn matmul(x: &Mat, w: &ndarray::Array2<f64>) -> Mat {
    x.iter()
        .map(|row| {
            (0..w.ncols())
                .map(|j| (0..w.nrows()).map(|i| row[i] * w[[i, j]]).sum())
                .collect()
        })
        .collect()
}

fn layer_norm(x: &Mat, gain: &ndarray::Array1<f64>, bias: &ndarray::Array1<f64>) -> Mat {
    x.iter()
        .map(|row| {
            let n = row.len() as f64;
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let r = 1.0 / (var + 1e-5).sqrt();
            row.iter()
                .enumerate()
                .map(|(i, v)| (v - mean) * r * gain[i] + bias[i])
                .collect()
        })
        .collect()
}

fn gelu(x: f64) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    0.5 * x * (1.0 + (c * (x + 0.044715 * x.powi(3))).tanh())
}

/// Logits for every position. `heads` with `mask` get their attention rows
/// multiplied by the mask and renormalized.
pub fn reference_logits(model: &Model, tokens: &[TokenId], heads: &[HeadId], mask: Option<&[f64]>) -> Mat {
    let cfg = &model.config;
    let p = &model.params;
    let t = tokens.len();
    let mut x: Mat = tokens
        .iter()
        .enumerate()
        .map(|(i, &tok)| {
            (0..cfg.d_model)
                .map(|j| p.tok_emb[[tok as usize, j]] + p.pos_emb[[i, j]])
                .collect()
        })
        .collect();

    for (l, lp) in p.layers.iter().enumerate() {
        let h1 = layer_norm(&x, &lp.ln1_gain, &lp.ln1_bias);
        let q = matmul(&h1, &lp.w_q);
        let k = matmul(&h1, &lp.w_k);
        let v = matmul(&h1, &lp.w_v);
        let mut ctx = vec![vec![0.0; cfg.n_heads * cfg.d_v]; t];
        for h in 0..cfg.n_heads {
            let modified = mask.is_some() && heads.contains(&HeadId::new(l, h));
            for i in 0..t {
                let mut w = vec![0.0; t];
                let mut mx = f64::NEG_INFINITY;
                for j in 0..=i {
                    let dot: f64 = (0..cfg.d_k).map(|c| q[i][h * cfg.d_k + c] * k[j][h * cfg.d_k + c]).sum();
                    w[j] = dot / (cfg.d_k as f64).sqrt();
                    mx = mx.max(w[j]);
                }
                let mut z = 0.0;
                for wj in w.iter_mut().take(i + 1) {
                    *wj = (*wj - mx).exp();
                    z += *wj;
                }
                for wj in w.iter_mut().take(i + 1) {
                    *wj /= z;
                }
                if modified {
                    let m = mask.unwrap();
                    let s: f64 = (0..t).map(|j| w[j] * m[j]).sum();
                    if s >= 1e-12 {
                        for j in 0..t {
                            w[j] = w[j] * m[j] / s;
                        }
                    }
                }
                for c in 0..cfg.d_v {
                    ctx[i][h * cfg.d_v + c] = (0..t).map(|j| w[j] * v[j][h * cfg.d_v + c]).sum();
                }
            }
        }
        let o = matmul(&ctx, &lp.w_o);
        for i in 0..t {
            for j in 0..cfg.d_model {
                x[i][j] += o[i][j];
            }
        }
        let h2 = layer_norm(&x, &lp.ln2_gain, &lp.ln2_bias);
        let mut ff = matmul(&h2, &lp.w_ff1);
        for row in ff.iter_mut() {
            for (j, a) in row.iter_mut().enumerate() {
                *a = gelu(*a + lp.b_ff1[j]);
            }
        }
        let f2 = matmul(&ff, &lp.w_ff2);
        for i in 0..t {
            for j in 0..cfg.d_model {
                x[i][j] += f2[i][j] + lp.b_ff2[j];
            }
        }
    }
    let hidden = layer_norm(&x, &p.lnf_gain, &p.lnf_bias);
    matmul(&hidden, &p.w_out)
}

pub fn log_softmax(row: &[f64], target: usize) -> f64 {
    let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = row.iter().map(|v| (v - mx).exp()).sum();
    row[target] - mx - z.ln()
}

/// Teacher-forced log-probability from the reference forward.
pub fn reference_logprob(
    model: &Model,
    context: &[TokenId],
    answer: &[TokenId],
    heads: &[HeadId],
    mask: Option<&[f64]>,
) -> f64 {
    let mut tokens = context.to_vec();
    tokens.extend_from_slice(&answer[..answer.len() - 1]);
    let full_mask = mask.map(|m| {
        let mut v = m.to_vec();
        v.resize(tokens.len(), 1.0);
        v
    });
    let logits = reference_logits(model, &tokens, heads, full_mask.as_deref());
    answer
        .iter()
        .enumerate()
        .map(|(i, &a)| log_softmax(&logits[context.len() - 1 + i], a as usize))
        .sum()
}

/// Brute-force mean IE per head: two reference forwards per (instance, head).
pub fn brute_force_ie(model: &Model, vocab: &Vocab, instances: &[QAInstance]) -> Vec<(HeadId, f64)> {
    let cfg = &model.config;
    let mut out = Vec::new();
    for l in 0..cfg.n_layers {
        for h in 0..cfg.n_heads {
            let head = HeadId::new(l, h);
            let mut total = 0.0;
            for q in instances {
                let context = q.prompt_tokens(vocab);
                let wrong = vocab.tokenize(&q.wrong_answer);
                // Credibility 0 on misinformation spans, 1 everywhere else.
                let mut mask = vec![1.0; context.len()];
                for (d, span) in q.documents.iter().zip(&q.token_spans) {
                    if d.kind.is_misinformation() {
                        for m in &mut mask[span.start..span.end] {
                            *m = 0.0;
                        }
                    }
                }
                let p0 = reference_logprob(model, &context, &wrong, &[], None).exp();
                let p1 = reference_logprob(model, &context, &wrong, &[head], Some(&mask)).exp();
                total += p0 - p1;
            }
            out.push((head, total / instances.len() as f64));
        }
    }
    out
}

pub fn tiny_config(n_layers: usize, n_heads: usize, d_model: usize, vocab: usize, seed: u64) -> ModelConfig {
    ModelConfig {
        n_layers,
        n_heads,
        d_model,
        d_k: 4,
        d_v: 4,
        d_ff: 2 * d_model,
        vocab_size: vocab,
        max_seq_len: 256,
        seed,
    }
}

/// Random model with weights large enough that attention is far from uniform.
pub fn spiky_model(cfg: &ModelConfig) -> Model {
    use rand::{Rng, SeedableRng};
    let mut model = cram_lab::model::init_model(cfg).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    for (name, data) in model.params.tensors_mut() {
        if name.ends_with("gain") {
            data.iter_mut().for_each(|x| *x = rng.random_range(0.5..1.5));
        } else {
            data.iter_mut().for_each(|x| *x = rng.random_range(-0.6..0.6));
        }
    }
    model
}
