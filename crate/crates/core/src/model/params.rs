// SPDX-License-Identifier: MIT OR Apache-2.0

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use super::config::ModelConfig;

/// Weights of one transformer block.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub ln1_gain: Array1<f64>,
    pub ln1_bias: Array1<f64>,
    /// `[d_model, n_heads * d_k]`, head `h` owns columns `h*d_k..(h+1)*d_k`.
    pub w_q: Array2<f64>,
    pub w_k: Array2<f64>,
    /// `[d_model, n_heads * d_v]`.
    pub w_v: Array2<f64>,
    /// `[n_heads * d_v, d_model]`.
    pub w_o: Array2<f64>,
    pub ln2_gain: Array1<f64>,
    pub ln2_bias: Array1<f64>,
    pub w_ff1: Array2<f64>,
    pub b_ff1: Array1<f64>,
    pub w_ff2: Array2<f64>,
    pub b_ff2: Array1<f64>,
}

/// Every trainable tensor of the model. Gradients use the same layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub tok_emb: Array2<f64>,
    pub pos_emb: Array2<f64>,
    pub layers: Vec<LayerParams>,
    pub lnf_gain: Array1<f64>,
    pub lnf_bias: Array1<f64>,
    /// `[d_model, vocab_size]`.
    pub w_out: Array2<f64>,
}

impl Params {
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let d = cfg.d_model;
        let layer = LayerParams {
            ln1_gain: Array1::zeros(d),
            ln1_bias: Array1::zeros(d),
            w_q: Array2::zeros((d, cfg.n_heads * cfg.d_k)),
            w_k: Array2::zeros((d, cfg.n_heads * cfg.d_k)),
            w_v: Array2::zeros((d, cfg.concat_width())),
            w_o: Array2::zeros((cfg.concat_width(), d)),
            ln2_gain: Array1::zeros(d),
            ln2_bias: Array1::zeros(d),
            w_ff1: Array2::zeros((d, cfg.d_ff)),
            b_ff1: Array1::zeros(cfg.d_ff),
            w_ff2: Array2::zeros((cfg.d_ff, d)),
            b_ff2: Array1::zeros(d),
        };
        Self {
            tok_emb: Array2::zeros((cfg.vocab_size, d)),
            pos_emb: Array2::zeros((cfg.max_seq_len, d)),
            layers: vec![layer; cfg.n_layers],
            lnf_gain: Array1::zeros(d),
            lnf_bias: Array1::zeros(d),
            w_out: Array2::zeros((d, cfg.vocab_size)),
        }
    }

    /// Zero-mean normal weights with std `0.02 / sqrt(n_layers)`, unit
    /// layer-norm gains and zero biases.
    pub fn init(cfg: &ModelConfig) -> Self {
        let mut p = Self::zeros(cfg);
        let std = 0.02 / (cfg.n_layers as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("positive std");
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        for (name, data) in p.tensors_mut() {
            if name.ends_with("gain") {
                data.fill(1.0);
            } else if name.contains("bias") || name.contains("b_ff") {
                data.fill(0.0);
            } else {
                data.iter_mut().for_each(|x| *x = normal.sample(&mut rng));
            }
        }
        p
    }

    /// Named flat views in a fixed order.
    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> = vec![
            ("tok_emb".into(), self.tok_emb.as_slice().unwrap()),
            ("pos_emb".into(), self.pos_emb.as_slice().unwrap()),
        ];
        for (i, l) in self.layers.iter().enumerate() {
            let named: [(&str, &[f64]); 12] = [
                ("ln1_gain", l.ln1_gain.as_slice().unwrap()),
                ("ln1_bias", l.ln1_bias.as_slice().unwrap()),
                ("w_q", l.w_q.as_slice().unwrap()),
                ("w_k", l.w_k.as_slice().unwrap()),
                ("w_v", l.w_v.as_slice().unwrap()),
                ("w_o", l.w_o.as_slice().unwrap()),
                ("ln2_gain", l.ln2_gain.as_slice().unwrap()),
                ("ln2_bias", l.ln2_bias.as_slice().unwrap()),
                ("w_ff1", l.w_ff1.as_slice().unwrap()),
                ("b_ff1", l.b_ff1.as_slice().unwrap()),
                ("w_ff2", l.w_ff2.as_slice().unwrap()),
                ("b_ff2", l.b_ff2.as_slice().unwrap()),
            ];
            out.extend(named.into_iter().map(|(n, d)| (format!("layers.{i}.{n}"), d)));
        }
        out.push(("lnf_gain".into(), self.lnf_gain.as_slice().unwrap()));
        out.push(("lnf_bias".into(), self.lnf_bias.as_slice().unwrap()));
        out.push(("w_out".into(), self.w_out.as_slice().unwrap()));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out: Vec<(String, &mut [f64])> = vec![
            ("tok_emb".into(), self.tok_emb.as_slice_mut().unwrap()),
            ("pos_emb".into(), self.pos_emb.as_slice_mut().unwrap()),
        ];
        for (i, l) in self.layers.iter_mut().enumerate() {
            let named: [(&str, &mut [f64]); 12] = [
                ("ln1_gain", l.ln1_gain.as_slice_mut().unwrap()),
                ("ln1_bias", l.ln1_bias.as_slice_mut().unwrap()),
                ("w_q", l.w_q.as_slice_mut().unwrap()),
                ("w_k", l.w_k.as_slice_mut().unwrap()),
                ("w_v", l.w_v.as_slice_mut().unwrap()),
                ("w_o", l.w_o.as_slice_mut().unwrap()),
                ("ln2_gain", l.ln2_gain.as_slice_mut().unwrap()),
                ("ln2_bias", l.ln2_bias.as_slice_mut().unwrap()),
                ("w_ff1", l.w_ff1.as_slice_mut().unwrap()),
                ("b_ff1", l.b_ff1.as_slice_mut().unwrap()),
                ("w_ff2", l.w_ff2.as_slice_mut().unwrap()),
                ("b_ff2", l.b_ff2.as_slice_mut().unwrap()),
            ];
            out.extend(named.into_iter().map(|(n, d)| (format!("layers.{i}.{n}"), d)));
        }
        out.push(("lnf_gain".into(), self.lnf_gain.as_slice_mut().unwrap()));
        out.push(("lnf_bias".into(), self.lnf_bias.as_slice_mut().unwrap()));
        out.push(("w_out".into(), self.w_out.as_slice_mut().unwrap()));
        out
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|(_, d)| d.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, d)| d.iter().all(|x| x.is_finite()))
    }

    /// SHA-256 over the little-endian bytes of every tensor, hex encoded.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for (name, data) in self.tensors() {
            h.update(name.as_bytes());
            for x in data {
                h.update(x.to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn fill(&mut self, value: f64) {
        for (_, d) in self.tensors_mut() {
            d.fill(value);
        }
    }

    pub fn sum_squares(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|(_, d)| d.iter())
            .map(|x| x * x)
            .sum()
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, d) in self.tensors_mut() {
            d.iter_mut().for_each(|x| *x *= factor);
        }
    }

    /// `self += other`, tensor by tensor.
    pub fn add_assign(&mut self, other: &Params) {
        for ((_, a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }
}
