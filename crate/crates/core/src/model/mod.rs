// SPDX-License-Identifier: MIT OR Apache-2.0

//! Minimal decoder-only transformer: forward with per-head attention
//! capture and reweighting, teacher-forced scoring, greedy decoding, and
//! training with hand-written backprop.

mod checkpoint;
mod config;
mod forward;
mod gradcheck;
mod infer;
mod params;
mod train;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_VERSION,
};
pub use config::ModelConfig;
pub use forward::{ForwardOutput, Model};
pub use gradcheck::{grad_check, GradCheckReport, SMALL_GRAD};
pub use params::{LayerParams, Params};
pub use train::{loss_trace_csv, train, LossPoint, LrSchedule, Optimizer, TrainConfig, TrainExample};

/// Vocabulary index.
pub type TokenId = u32;

/// Builds a freshly initialized model. Equal configs give identical weights.
pub fn init_model(config: &ModelConfig) -> crate::error::Result<Model> {
    config.validate()?;
    Ok(Model {
        config: config.clone(),
        params: Params::init(config),
    })
}
