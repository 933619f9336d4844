// SPDX-License-Identifier: MIT OR Apache-2.0

//! Run configuration: a flat TOML file plus `CRAM_*` environment overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{InstanceSpec, SplitSizes, TrainingMix};
use crate::cram::default_multiplier_grid;
use crate::error::{LabError, Result};
use crate::eval::ScoreSource;
use crate::model::{LrSchedule, ModelConfig, Optimizer, TrainConfig};
use crate::seed::derive_seed;

/// Prefix for environment variables that override config keys.
pub const ENV_PREFIX: &str = "CRAM_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Worker threads; 0 lets the runtime decide.
    pub jobs: usize,

    pub n_entities: usize,
    pub n_relations: usize,
    pub n_facts: usize,
    pub n_high: usize,
    pub n_mis: usize,
    pub filtered: bool,
    pub mis_repeats_min: usize,
    pub mis_repeats_max: usize,

    pub train_size: usize,
    pub max_plain: usize,
    pub max_news: usize,
    pub max_news_repeats: usize,
    pub max_prompt_len: usize,

    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_k: usize,
    pub d_v: usize,
    pub d_ff: usize,
    pub max_seq_len: usize,

    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lr_schedule: LrSchedule,
    pub gradient_clip: f64,
    pub optimizer: Optimizer,

    pub ie_set_size: usize,
    pub validation_size: usize,
    pub test_size: usize,
    pub multiplier_grid: Vec<f64>,
    pub score_source: ScoreSource,
    pub scores_path: Option<PathBuf>,
    pub exclusion_threshold: f64,
    /// Identification-set sizes for the optional size sweep during `eval`.
    pub ie_sweep_sizes: Vec<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let model = ModelConfig::default();
        let train = TrainConfig::default();
        let spec = InstanceSpec::default();
        let mix = TrainingMix::default();
        let sizes = SplitSizes::default();
        Self {
            seed: 0,
            output_dir: PathBuf::from("cram-out"),
            jobs: 0,
            n_entities: 150,
            n_relations: 10,
            n_facts: 1300,
            n_high: spec.n_high,
            n_mis: spec.n_mis,
            filtered: spec.filtered,
            mis_repeats_min: spec.mis_repeats.0,
            mis_repeats_max: spec.mis_repeats.1,
            train_size: 30000,
            max_plain: mix.max_plain,
            max_news: mix.max_news,
            max_news_repeats: mix.max_news_repeats,
            max_prompt_len: mix.max_prompt_len,
            n_layers: model.n_layers,
            n_heads: model.n_heads,
            d_model: model.d_model,
            d_k: model.d_k,
            d_v: model.d_v,
            d_ff: model.d_ff,
            max_seq_len: model.max_seq_len,
            steps: train.steps,
            batch_size: train.batch_size,
            learning_rate: train.learning_rate,
            lr_schedule: train.lr_schedule,
            gradient_clip: train.gradient_clip,
            optimizer: train.optimizer,
            ie_set_size: sizes.ie,
            validation_size: sizes.validation,
            test_size: sizes.test,
            multiplier_grid: default_multiplier_grid(),
            score_source: ScoreSource::Ideal,
            scores_path: None,
            exclusion_threshold: 5.0,
            ie_sweep_sizes: Vec::new(),
        }
    }
}

fn parse_env_value(raw: &str) -> toml::Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

impl RunConfig {
    /// Parses config text, applying `overrides` (key, raw value) on top.
    pub fn from_toml_with(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e| LabError::Config(format!("config: {e}")))?;
        for (k, v) in overrides {
            table.insert(k.clone(), parse_env_value(v));
        }
        let cfg: RunConfig = table
            .try_into()
            .map_err(|e| LabError::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// `CRAM_<KEY>` variables from the process environment, keys lowercased.
    pub fn env_overrides() -> Vec<(String, String)> {
        let mut v: Vec<(String, String)> = std::env::vars()
            .filter_map(|(k, val)| {
                k.strip_prefix(ENV_PREFIX)
                    .map(|key| (key.to_ascii_lowercase(), val))
            })
            .collect();
        v.sort();
        v
    }

    /// Loads `path` (or defaults when `None`) and applies environment overrides.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| LabError::io(p, e))?,
            None => String::new(),
        };
        Self::from_toml_with(&text, &Self::env_overrides())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.model_config(1).validate()?;
        self.train_config().validate()?;
        self.instance_spec().validate()?;
        if self.mis_repeats_min == 0 || self.mis_repeats_min > self.mis_repeats_max {
            return Err(LabError::Config(format!(
                "misinformation repeats must satisfy 1 <= min <= max, got {}..={}",
                self.mis_repeats_min, self.mis_repeats_max
            )));
        }
        let need = self.ie_set_size + self.validation_size + self.test_size;
        if need > self.n_facts {
            return Err(LabError::Config(format!(
                "splits need {need} facts but n_facts is {}",
                self.n_facts
            )));
        }
        if self.ie_set_size == 0 || self.validation_size == 0 || self.test_size == 0 {
            return Err(LabError::Config("split sizes must be positive".into()));
        }
        if self.train_size == 0 {
            return Err(LabError::Config("train_size must be positive".into()));
        }
        if self.multiplier_grid.is_empty() || self.multiplier_grid.iter().any(|m| m.is_nan() || *m <= 0.0) {
            return Err(LabError::Config("multiplier_grid needs positive entries".into()));
        }
        if let Some(&s) = self.ie_sweep_sizes.iter().find(|&&s| s == 0 || s > self.ie_set_size) {
            return Err(LabError::Config(format!(
                "ie_sweep_sizes entry {s} not in 1..={}",
                self.ie_set_size
            )));
        }
        if self.score_source == ScoreSource::Ingested && self.scores_path.is_none() {
            return Err(LabError::Config(
                "score_source = \"ingested\" needs scores_path (or --scores)".into(),
            ));
        }
        Ok(())
    }

    /// Seed for one pipeline stage.
    pub fn stage_seed(&self, stage: &str) -> u64 {
        derive_seed(self.seed, stage)
    }

    pub fn instance_spec(&self) -> InstanceSpec {
        InstanceSpec {
            n_high: self.n_high,
            n_mis: self.n_mis,
            filtered: self.filtered,
            mis_repeats: (self.mis_repeats_min, self.mis_repeats_max),
        }
    }

    pub fn training_mix(&self) -> TrainingMix {
        TrainingMix {
            max_plain: self.max_plain,
            max_news: self.max_news,
            max_news_repeats: self.max_news_repeats,
            max_prompt_len: self.max_prompt_len,
        }
    }

    pub fn split_sizes(&self) -> SplitSizes {
        SplitSizes {
            ie: self.ie_set_size,
            validation: self.validation_size,
            test: self.test_size,
        }
    }

    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            n_layers: self.n_layers,
            n_heads: self.n_heads,
            d_model: self.d_model,
            d_k: self.d_k,
            d_v: self.d_v,
            d_ff: self.d_ff,
            vocab_size,
            max_seq_len: self.max_seq_len,
            seed: self.stage_seed("init"),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            steps: self.steps,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            lr_schedule: self.lr_schedule,
            gradient_clip: self.gradient_clip,
            seed: self.stage_seed("train"),
            optimizer: self.optimizer,
        }
    }
}
