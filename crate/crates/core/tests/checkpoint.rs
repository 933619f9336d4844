// SPDX-License-Identifier: MIT OR Apache-2.0

mod common;

use cram_lab::model::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
use cram_lab::LabError;

#[test]
fn round_trip_is_exact() {
    let m = common::spiky_model(&common::tiny_config(2, 2, 8, 11, 4));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.bin");
    save_checkpoint(&m, &path).unwrap();
    let back = load_checkpoint(&path).unwrap();
    assert_eq!(back, m);
    assert_eq!(back.checksum(), m.checksum());
    assert_eq!(encode_checkpoint(&back), std::fs::read(&path).unwrap());
}

#[test]
fn version_mismatch_is_loud() {
    let m = common::spiky_model(&common::tiny_config(1, 1, 4, 6, 0));
    let mut bytes = encode_checkpoint(&m);
    bytes[8..12].copy_from_slice(&(CHECKPOINT_VERSION + 1).to_le_bytes());
    match decode_checkpoint(&bytes) {
        Err(LabError::Data(msg)) => assert!(msg.contains("version")),
        other => panic!("expected data error, got {other:?}"),
    }
}

#[test]
fn corrupt_input_is_rejected() {
    let m = common::spiky_model(&common::tiny_config(1, 1, 4, 6, 0));
    let bytes = encode_checkpoint(&m);
    assert!(matches!(decode_checkpoint(&bytes[..bytes.len() - 3]), Err(LabError::Data(_))));
    assert!(matches!(decode_checkpoint(b"NOTACKPT"), Err(LabError::Data(_))));
    assert!(matches!(
        load_checkpoint(std::path::Path::new("/nonexistent/m.bin")),
        Err(LabError::Io { .. })
    ));
}
