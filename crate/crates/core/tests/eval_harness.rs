// SPDX-License-Identifier: MIT OR Apache-2.0

mod common;

use std::collections::HashMap;

use cram_lab::corpus::{
    apply_scores, build_vocab, gen_world, split_dataset, InstanceSpec, QAInstance, ScoreTable, SplitSizes,
    Vocab, World,
};
use cram_lab::cram::HeadId;
use cram_lab::eval::{
    em, f1, load_report, prepare_input, serialize_report, standard_policies, sweep_ie_set_size, sweep_misinfo,
    Evaluator, Policy, PolicyKind, ReportFormat, ReportMeta, ReportSeries, ResultRow, ScoreSource,
};
use cram_lab::model::Model;
use cram_lab::LabError;
use proptest::prelude::*;

use common::{spiky_model, tiny_config};

fn setup(test: usize) -> (World, Vocab, Model, Vec<QAInstance>) {
    let world = gen_world(8, 40, 4, 60).unwrap();
    let vocab = build_vocab(&world);
    let model = spiky_model(&tiny_config(2, 2, 16, vocab.len(), 5));
    let sizes = SplitSizes { ie: 5, validation: 5, test };
    let splits = split_dataset(&world, sizes, &InstanceSpec::default(), 1).unwrap();
    (world, vocab, model, splits.test_set)
}

fn ideal(kind: PolicyKind) -> Policy {
    Policy::new(kind, ScoreSource::Ideal)
}

#[test]
fn exclusion_keeps_high_credibility_docs() {
    let (_, vocab, model, test) = setup(5);
    for q in &test {
        let clean = prepare_input(&model, &vocab, q, &ideal(PolicyKind::NaiveClean)).unwrap();
        let excl = prepare_input(&model, &vocab, q, &ideal(PolicyKind::Exclusion { threshold: 5.0 })).unwrap();
        assert_eq!(clean, excl);
        // Threshold at the minimum keeps everything.
        let low = prepare_input(&model, &vocab, q, &ideal(PolicyKind::Exclusion { threshold: 1.0 })).unwrap();
        let polluted = prepare_input(&model, &vocab, q, &ideal(PolicyKind::NaivePolluted)).unwrap();
        assert_eq!(low, polluted);
        // Every document below the threshold: BOS SEP query ANS remain.
        let mut empty = q.clone();
        empty.scores = Some(vec![0.5; q.documents.len()]);
        let gone = prepare_input(&model, &vocab, &empty, &ideal(PolicyKind::Exclusion { threshold: 1.0 })).unwrap();
        let query_len = vocab.tokenize(&q.query).len();
        assert_eq!(gone.tokens.len(), query_len + 3);
    }
}

#[test]
fn policy_preconditions() {
    let (_, vocab, model, test) = setup(3);
    let eval = Evaluator::new(&model, &vocab);
    assert!(matches!(
        eval.run_condition(&test, &ideal(PolicyKind::Cram { heads: vec![] })),
        Err(LabError::Config(_))
    ));
    let mut unscored = test.clone();
    unscored[1].scores = None;
    assert!(matches!(
        eval.run_condition(&unscored, &ideal(PolicyKind::CramAll)),
        Err(LabError::Config(_))
    ));
    assert!(eval.run_condition(&unscored, &ideal(PolicyKind::NaivePolluted)).is_ok());
    assert!(matches!(
        eval.run_condition(&test, &ideal(PolicyKind::Cram { heads: vec![HeadId::new(9, 0)] })),
        Err(LabError::Plan(_))
    ));
}

#[test]
fn uniform_scores_match_naive_polluted() {
    let (_, vocab, model, test) = setup(20);
    let eval = Evaluator::new(&model, &vocab);
    let uniform: Vec<QAInstance> = test
        .iter()
        .map(|q| {
            let mut q = q.clone();
            q.scores = Some(vec![4.0; q.documents.len()]);
            q
        })
        .collect();
    let naive = eval.run_condition(&uniform, &ideal(PolicyKind::NaivePolluted)).unwrap();
    let all = eval.run_condition(&uniform, &ideal(PolicyKind::CramAll)).unwrap();
    let some = eval
        .run_condition(&uniform, &ideal(PolicyKind::Cram { heads: vec![HeadId::new(0, 1)] }))
        .unwrap();
    let preds = |r: &cram_lab::eval::EvalReport| r.predictions.iter().map(|p| p.prediction.clone()).collect::<Vec<_>>();
    assert_eq!(preds(&naive), preds(&all));
    assert_eq!(preds(&naive), preds(&some));
}

#[test]
fn report_invariants() {
    let (_, vocab, model, test) = setup(20);
    let eval = Evaluator::new(&model, &vocab);
    for p in standard_policies(&[HeadId::new(1, 0)], 5.0, ScoreSource::Ideal) {
        let r = eval.run_condition(&test, &p).unwrap();
        assert_eq!(r.n_instances, test.len());
        assert_eq!(r.predictions.len(), test.len());
        assert!((0.0..=100.0).contains(&r.em) && (0.0..=100.0).contains(&r.f1));
        assert!(r.em <= r.f1 + 1e-12);
        for pr in &r.predictions {
            if pr.em == 1.0 {
                assert_eq!(pr.f1, 1.0);
            }
        }
    }
}

#[test]
fn sweep_shapes_and_pairing() {
    let (world, vocab, model, test) = setup(12);
    let eval = Evaluator::new(&model, &vocab);
    let policies = standard_policies(&[HeadId::new(1, 1)], 5.0, ScoreSource::Ideal);
    let spec = InstanceSpec::default();
    let out = sweep_misinfo(&eval, &world, &test, &spec, &policies, &[0, 1, 2, 3], None).unwrap();
    assert_eq!(out.len(), policies.len() * 4);
    let at = |label: &str, n: usize| {
        out.iter()
            .find(|e| e.n_mis == n && e.report.policy == label)
            .unwrap()
            .report
            .clone()
    };
    assert_eq!(at("naive_clean", 0).predictions, at("naive_polluted", 0).predictions);
    for n in 1..=3 {
        assert_eq!(at("naive_clean", 0).predictions, at("naive_clean", n).predictions);
    }

    let ingested = vec![Policy::new(PolicyKind::NaivePolluted, ScoreSource::Ingested)];
    assert!(matches!(
        sweep_misinfo(&eval, &world, &test, &spec, &ingested, &[1], None),
        Err(LabError::Config(_))
    ));
}

#[test]
fn ingested_scores_drive_cram() {
    let (world, vocab, model, test) = setup(6);
    let spec = InstanceSpec::default();
    let mut table = ScoreTable::new();
    for q in cram_lab::corpus::relayout(&world, &test, &spec).unwrap() {
        let row = q
            .documents
            .iter()
            .map(|d| (d.doc_id.clone(), if d.kind.is_misinformation() { 2.0 } else { 9.0 }))
            .collect();
        table.insert(q.id.clone(), row);
    }
    let eval = Evaluator::new(&model, &vocab);
    let heads = vec![HeadId::new(0, 0), HeadId::new(1, 1)];
    let ideal_run = sweep_misinfo(&eval, &world, &test, &spec, &[ideal(PolicyKind::Cram { heads: heads.clone() })], &[1], None).unwrap();
    let ing = Policy::new(PolicyKind::Cram { heads }, ScoreSource::Ingested);
    let ing_run = sweep_misinfo(&eval, &world, &test, &spec, &[ing], &[1], Some(&table)).unwrap();
    // Min-max normalization maps {2, 9} and {1, 10} to the same mask.
    assert_eq!(ideal_run[0].report.predictions, ing_run[0].report.predictions);

    let mut partial = table.clone();
    partial.values_mut().next().unwrap().remove("h0");
    let e = apply_scores(&partial, &test).unwrap_err();
    assert!(matches!(e, LabError::Ingestion { ref key, .. } if key.ends_with("/h0")));
}

#[test]
fn ie_size_sweep_shares_test_split() {
    let world = gen_world(8, 40, 4, 60).unwrap();
    let vocab = build_vocab(&world);
    let model = spiky_model(&tiny_config(1, 2, 8, vocab.len(), 5));
    let splits = split_dataset(&world, SplitSizes { ie: 10, validation: 4, test: 6 }, &InstanceSpec::default(), 2).unwrap();
    let eval = Evaluator::new(&model, &vocab);
    let grid = [0.5, 1.0];
    match sweep_ie_set_size(&eval, &splits.ie_set, &splits.validation_set, &splits.test_set, &[2, 10], &grid) {
        Ok(s) => {
            assert_eq!(s.entries.len(), 2);
            assert_eq!(s.entries[0].test_fingerprint, s.entries[1].test_fingerprint);
            let ems: Vec<f64> = s.entries.iter().map(|e| e.report.em).collect();
            let spread = ems.iter().cloned().fold(f64::MIN, f64::max) - ems.iter().cloned().fold(f64::MAX, f64::min);
            assert_eq!(s.em_spread, spread);
        }
        // A random model may have no head that lowers the wrong answer.
        Err(e) => assert!(matches!(e, LabError::Selection(_)), "{e}"),
    }
    assert!(sweep_ie_set_size(&eval, &splits.ie_set, &splits.validation_set, &splits.test_set, &[11], &grid).is_err());
}

#[test]
fn report_files_round_trip() {
    let series = ReportSeries {
        meta: ReportMeta {
            model_checksum: "abc".into(),
            corpus_seed: 4,
            head_set: vec![[0, 1], [1, 0]],
            grid: vec![0.5, 1.0],
            filtered: false,
            test_fingerprint: "ff".into(),
        },
        results: (0..4)
            .map(|n| ResultRow {
                policy: "cram".into(),
                score_source: ScoreSource::Ideal,
                n_mis: n,
                em: 50.0 + n as f64 / 3.0,
                f1: 60.0,
                n: 10,
            })
            .collect(),
    };
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("r.json");
    let csv = dir.path().join("r.csv");
    serialize_report(&series, &json, ReportFormat::Json).unwrap();
    serialize_report(&series, &csv, ReportFormat::Csv).unwrap();
    assert_eq!(load_report(&json).unwrap(), series);
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 5);
    let first = std::fs::read(&json).unwrap();
    serialize_report(&load_report(&json).unwrap(), &json, ReportFormat::Json).unwrap();
    assert_eq!(std::fs::read(&json).unwrap(), first);
    assert!(matches!(
        serialize_report(&series, &dir.path().join("missing/r.json"), ReportFormat::Json),
        Err(LabError::Io { .. })
    ));
}

/// Token-bag F1 written independently of the library.
fn reference_f1(pred: &[&str], gold: &[&str]) -> f64 {
    let mut counts: HashMap<&str, i32> = HashMap::new();
    gold.iter().for_each(|t| *counts.entry(t).or_default() += 1);
    let common = pred.iter().filter(|t| match counts.get_mut(*t) {
        Some(c) if *c > 0 => { *c -= 1; true }
        _ => false,
    }).count() as f64;
    if pred.is_empty() || gold.is_empty() { return (pred.is_empty() && gold.is_empty()) as u8 as f64; }
    if common == 0.0 { return 0.0; }
    let (p, r) = (common / pred.len() as f64, common / gold.len() as f64);
    2.0 * p * r / (p + r)
}

#[test]
fn metric_worked_examples() {
    assert_eq!((em("Paris.", "paris"), f1("Paris.", "paris")), (1.0, 1.0));
    assert_eq!(f1("the Eiffel Tower", "Eiffel Tower"), 1.0);
    assert_eq!((em("red", "blue"), f1("red", "blue")), (0.0, 0.0));
    assert_eq!((em("", ""), f1("", "")), (1.0, 1.0));
    assert_eq!((em("", "x"), f1("x", "")), (0.0, 0.0));
}

proptest! {
    #[test]
    fn f1_matches_reference(
        pred in prop::collection::vec(prop::sample::select(vec!["ka", "lo", "mi", "nu", "po"]), 0..6),
        gold in prop::collection::vec(prop::sample::select(vec!["ka", "lo", "mi", "nu", "po"]), 0..6),
    ) {
        let got = f1(&pred.join(" "), &gold.join(" "));
        prop_assert!((got - reference_f1(&pred, &gold)).abs() < 1e-12);
        let e = em(&pred.join(" "), &gold.join(" "));
        prop_assert_eq!(e, (pred == gold) as u8 as f64);
        if e == 1.0 {
            prop_assert_eq!(got, 1.0);
        }
    }
}
