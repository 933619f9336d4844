// SPDX-License-Identifier: MIT OR Apache-2.0

//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//! `b"CRAMCKPT"`, `u32` format version, `u64` length + JSON model config,
//! `u32` tensor count, then per tensor `u32` name length, name bytes,
//! `u64` element count and that many `f64` values.

use std::io::{Cursor, Read};
use std::path::Path;

use super::config::ModelConfig;
use super::forward::Model;
use super::params::Params;
use crate::error::{LabError, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"CRAMCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_checkpoint(model: &Model) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let cfg = serde_json::to_vec(&model.config).expect("config serializes");
    out.extend_from_slice(&(cfg.len() as u64).to_le_bytes());
    out.extend_from_slice(&cfg);
    let tensors = model.params.tensors();
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, data) in tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(data.len() as u64).to_le_bytes());
        for x in data {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

fn take<const N: usize>(r: &mut Cursor<&[u8]>) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|_| LabError::Data("truncated checkpoint".into()))?;
    Ok(buf)
}

fn take_vec(r: &mut Cursor<&[u8]>, n: usize) -> Result<Vec<u8>> {
    let remaining = r.get_ref().len() - r.position() as usize;
    if n > remaining {
        return Err(LabError::Data("truncated checkpoint".into()));
    }
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf)
        .map_err(|_| LabError::Data("truncated checkpoint".into()))?;
    Ok(buf)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Model> {
    let mut r = Cursor::new(bytes);
    if &take::<8>(&mut r)? != CHECKPOINT_MAGIC {
        return Err(LabError::Data("not a checkpoint file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(take(&mut r)?);
    if version != CHECKPOINT_VERSION {
        return Err(LabError::Data(format!(
            "checkpoint format version {version}, this build reads version {CHECKPOINT_VERSION}"
        )));
    }
    let cfg_len = u64::from_le_bytes(take(&mut r)?) as usize;
    let config: ModelConfig = serde_json::from_slice(&take_vec(&mut r, cfg_len)?)
        .map_err(|e| LabError::Data(format!("checkpoint config: {e}")))?;
    config.validate()?;
    let mut params = Params::zeros(&config);
    let count = u32::from_le_bytes(take(&mut r)?) as usize;
    let mut slots = params.tensors_mut();
    if count != slots.len() {
        return Err(LabError::Data(format!(
            "checkpoint holds {count} tensors, config implies {}",
            slots.len()
        )));
    }
    for (name, slot) in slots.iter_mut() {
        let n = u32::from_le_bytes(take(&mut r)?) as usize;
        let got = String::from_utf8(take_vec(&mut r, n)?)
            .map_err(|_| LabError::Data("tensor name is not utf-8".into()))?;
        if &got != name {
            return Err(LabError::Data(format!("expected tensor {name}, found {got}")));
        }
        let len = u64::from_le_bytes(take(&mut r)?) as usize;
        if len != slot.len() {
            return Err(LabError::Data(format!(
                "tensor {name} has {len} values, expected {}",
                slot.len()
            )));
        }
        for x in slot.iter_mut() {
            *x = f64::from_le_bytes(take(&mut r)?);
        }
    }
    drop(slots);
    if (r.position() as usize) != bytes.len() {
        return Err(LabError::Data("trailing bytes after checkpoint".into()));
    }
    if !params.all_finite() {
        return Err(LabError::Data("checkpoint contains non-finite weights".into()));
    }
    Ok(Model { config, params })
}

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<()> {
    std::fs::write(path, encode_checkpoint(model)).map_err(|e| LabError::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    let bytes = std::fs::read(path).map_err(|e| LabError::io(path, e))?;
    decode_checkpoint(&bytes)
}
