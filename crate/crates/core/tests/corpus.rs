// SPDX-License-Identifier: MIT OR Apache-2.0

use cram_lab::corpus::{
    build_vocab, gen_instance, gen_training_set, gen_world, ingest_external_scores, read_jsonl, split_dataset,
    write_jsonl, DocKind, InstanceSpec, QAInstance, SplitSizes, TrainingMix, Vocab,
};
use cram_lab::corpus::templates::PLACEHOLDER;
use cram_lab::LabError;

#[test]
fn template_text_round_trips_through_vocab() {
    let w = gen_world(4, 60, 6, 200).unwrap();
    let v = build_vocab(&w);
    let spec = InstanceSpec { n_mis: 3, ..Default::default() };
    for f in 0..40 {
        let q = gen_instance(&w, f, &spec, f as u64, "x").unwrap();
        for d in &q.documents {
            assert_eq!(v.detokenize(&v.tokenize(&d.text)), d.text);
        }
        assert_eq!(v.detokenize(&v.tokenize(&q.query)), q.query);
        assert!(q.prompt_tokens(&v).iter().all(|&t| t != v.unk()));
    }
    for item in gen_training_set(&w, 50, &TrainingMix::default(), 3).unwrap() {
        for d in &item.documents {
            assert_eq!(v.detokenize(&v.tokenize(d)), *d);
        }
    }
    assert_eq!(Vocab::from_file_string(&v.to_file_string()).unwrap(), v);
}

#[test]
fn world_is_deterministic_and_bounded() {
    assert_eq!(gen_world(9, 50, 4, 100).unwrap(), gen_world(9, 50, 4, 100).unwrap());
    assert_ne!(gen_world(9, 50, 4, 100).unwrap(), gen_world(10, 50, 4, 100).unwrap());
    assert!(matches!(gen_world(1, 10, 2, 21), Err(LabError::Config(_))));
    let w = gen_world(9, 50, 4, 100).unwrap();
    assert!(w.facts.iter().all(|f| f.object != f.distractor_object));
}

#[test]
fn filtered_instances_never_leak_gold() {
    let w = gen_world(4, 60, 6, 200).unwrap();
    let spec = InstanceSpec { n_mis: 3, filtered: true, ..Default::default() };
    for f in 0..100 {
        let q = gen_instance(&w, f, &spec, 7 * f as u64, "x").unwrap();
        for d in q.documents.iter().filter(|d| d.kind == DocKind::FilteredMisinformation) {
            assert!(!d.text.split(' ').any(|t| t == q.gold_answer));
            assert!(d.text.split(' ').any(|t| t == PLACEHOLDER));
            assert!(d.text.split(' ').any(|t| t == q.wrong_answer));
        }
        assert_eq!(q.n_misinformation(), 3);
    }
}

#[test]
fn splits_survive_jsonl() {
    let w = gen_world(4, 60, 6, 200).unwrap();
    let s = split_dataset(&w, SplitSizes { ie: 3, validation: 3, test: 10 }, &InstanceSpec::default(), 5).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("t.jsonl");
    write_jsonl(&p, &s.test_set).unwrap();
    let back: Vec<QAInstance> = read_jsonl(&p).unwrap();
    assert_eq!(back, s.test_set);
    assert!(back.iter().all(|q| q.scores.is_some()));
}

#[test]
fn score_file_errors_name_the_entry() {
    let w = gen_world(4, 60, 6, 200).unwrap();
    let qs: Vec<QAInstance> = (0..2)
        .map(|i| gen_instance(&w, i, &InstanceSpec::default(), i as u64, &format!("q{i}")).unwrap())
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("s.json");

    std::fs::write(&p, r#"{"q0": {"h0": 9, "h1": 9, "h2": 9, "h3": 9, "m0": 1}, "q1": {"h0": 9, "h1": 9, "h2": 9, "h3": 9, "m0": 11}}"#).unwrap();
    match ingest_external_scores(&p, &qs) {
        Err(LabError::Ingestion { key, .. }) => assert_eq!(key, "q1/m0"),
        other => panic!("{other:?}"),
    }
    std::fs::write(&p, r#"{"q0": {"h0": 9, "h1": 9, "h2": 9, "h3": 9, "m0": 1}}"#).unwrap();
    match ingest_external_scores(&p, &qs) {
        Err(LabError::Ingestion { key, .. }) => assert_eq!(key, "q1"),
        other => panic!("{other:?}"),
    }
    std::fs::write(&p, r#"{"q0": {"h0": 9, "h1": 9, "h2": 9, "h3": 9, "m0": 1, "zz": 3}, "q1": {"h0": 9, "h1": 9, "h2": 9, "h3": 9, "m0": 0}}"#).unwrap();
    let ing = ingest_external_scores(&p, &qs).unwrap();
    assert_eq!(ing.unused_entries, 1);
    // Scores follow the instance's document order, not the file's.
    let want: Vec<f64> = ing.instances[1]
        .documents
        .iter()
        .map(|d| if d.doc_id == "m0" { 0.0 } else { 9.0 })
        .collect();
    assert_eq!(ing.instances[1].scores.as_ref(), Some(&want));
}
