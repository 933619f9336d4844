// SPDX-License-Identifier: MIT OR Apache-2.0

mod common;

use cram_lab::corpus::{build_vocab, gen_instance, gen_world, with_ideal_scores, InstanceSpec, TokenSpan};
use cram_lab::cram::{
    candidate_counts, compute_ie, compute_ie_table, default_multiplier_grid, modify_row, normalize_scores,
    rank_heads, select_head_count, HeadId, IETable,
};
use cram_lab::eval::Evaluator;
use cram_lab::model::ModelConfig;
use cram_lab::LabError;
use proptest::prelude::*;

use common::{brute_force_ie, spiky_model};

#[test]
fn worked_examples() {
    let out = modify_row(&[0.5, 0.3, 0.2], &[1.0, 0.0, 1.0]).unwrap();
    let want = [5.0 / 7.0, 0.0, 2.0 / 7.0];
    assert!(out.iter().zip(want).all(|(a, b)| (a - b).abs() < 1e-12));
    assert_eq!(modify_row(&[1.0, 0.0, 0.0], &[0.0, 1.0, 1.0]).unwrap(), vec![1.0, 0.0, 0.0]);
    assert!(matches!(modify_row(&[1.0, 0.0], &[1.0]), Err(LabError::Dimension(_))));

    let spans = [TokenSpan { start: 1, end: 3 }, TokenSpan { start: 4, end: 6 }];
    let m = normalize_scores(&[10.0, 1.0], &spans, 7).unwrap();
    assert_eq!(m.values(), &[1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 1.0]);
    let m = normalize_scores(&[5.0, 5.0], &spans, 7).unwrap();
    assert!(m.is_all_ones());
}

#[test]
fn ie_table_matches_brute_force() {
    let world = gen_world(3, 30, 3, 20).unwrap();
    let vocab = build_vocab(&world);
    let cfg = ModelConfig {
        n_layers: 2,
        n_heads: 2,
        d_model: 8,
        d_k: 4,
        d_v: 4,
        d_ff: 16,
        vocab_size: vocab.len(),
        max_seq_len: 256,
        seed: 17,
    };
    let model = spiky_model(&cfg);
    let spec = InstanceSpec::default();
    let instances: Vec<_> = (0..3)
        .map(|i| gen_instance(&world, i, &spec, 40 + i as u64, &format!("q{i}")).map(with_ideal_scores).unwrap())
        .collect();

    let table = compute_ie_table(&model, &vocab, &instances, true).unwrap();
    let oracle = brute_force_ie(&model, &vocab, &instances);
    assert_eq!(table.mean_ie.len(), 4);
    for (head, want) in oracle {
        let got = table.get(head).unwrap();
        assert!((got - want).abs() < 1e-8, "{head}: {got} vs {want}");
    }
    assert_eq!(table.n_instances, 3);
    let rec = compute_ie(&model, &vocab, &instances[1], HeadId::new(1, 0)).unwrap();
    assert_eq!(table.records.as_ref().unwrap()[&("q1".to_string(), HeadId::new(1, 0))], rec);
}

#[test]
fn ie_needs_misinformation() {
    let world = gen_world(3, 30, 3, 20).unwrap();
    let vocab = build_vocab(&world);
    let model = spiky_model(&common::tiny_config(1, 2, 8, vocab.len(), 0));
    let clean = gen_instance(&world, 0, &InstanceSpec::default().with_n_mis(0), 1, "c").unwrap();
    assert!(matches!(
        compute_ie(&model, &vocab, &clean, HeadId::new(0, 0)),
        Err(LabError::Instance(_))
    ));
    let polluted = gen_instance(&world, 0, &InstanceSpec::default(), 1, "p").unwrap();
    assert!(matches!(
        compute_ie(&model, &vocab, &polluted, HeadId::new(4, 0)),
        Err(LabError::Plan(_))
    ));
}

#[test]
fn ranking_and_candidates() {
    let mut t = IETable::default();
    for (i, v) in [0.1, 0.3, -0.2, 0.3].into_iter().enumerate() {
        t.mean_ie.insert(HeadId::new(i / 2, i % 2), v);
    }
    assert_eq!(
        rank_heads(&t),
        vec![HeadId::new(0, 1), HeadId::new(1, 1), HeadId::new(0, 0), HeadId::new(1, 0)]
    );
    assert_eq!(t.positive_count(), 3);
    assert_eq!(candidate_counts(50, 1024, &default_multiplier_grid()), vec![1, 10, 20, 30, 40, 50, 60, 70, 80, 90, 100]);
    assert_eq!(candidate_counts(3, 4, &default_multiplier_grid()), vec![1, 2, 3, 4]);
}

#[test]
fn selection_fails_without_positive_heads() {
    let world = gen_world(3, 30, 3, 20).unwrap();
    let vocab = build_vocab(&world);
    let model = spiky_model(&common::tiny_config(1, 2, 8, vocab.len(), 0));
    let val = vec![with_ideal_scores(gen_instance(&world, 0, &InstanceSpec::default(), 1, "v").unwrap())];
    let mut t = IETable::default();
    t.mean_ie.insert(HeadId::new(0, 0), 0.0);
    t.mean_ie.insert(HeadId::new(0, 1), -0.5);
    let eval = Evaluator::new(&model, &vocab);
    assert!(matches!(
        select_head_count(&eval, &t, &val, &default_multiplier_grid()),
        Err(LabError::Selection(_))
    ));
    t.mean_ie.insert(HeadId::new(0, 1), 0.5);
    let s = select_head_count(&eval, &t, &val, &default_multiplier_grid()).unwrap();
    assert_eq!((s.m_pos, s.k), (1, 1));
    assert_eq!(s.heads, vec![HeadId::new(0, 1)]);
    let json: serde_json::Value = serde_json::from_str(&s.to_json()).unwrap();
    assert_eq!(json["heads"], serde_json::json!([[0, 1]]));
    assert!(json.get("k").is_some() && json.get("m_pos").is_some() && json.get("multiplier_grid").is_some());
}

fn row_and_mask() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..24).prop_flat_map(|n| {
        (
            prop::collection::vec(0.0f64..1.0, n),
            prop::collection::vec(prop_oneof![Just(0.0), Just(1.0), 0.0f64..=1.0], n),
            0..n,
        )
            .prop_map(|(raw, mask, causal)| {
                let mut row: Vec<f64> = raw.iter().enumerate().map(|(j, v)| if j <= causal { v + 1e-3 } else { 0.0 }).collect();
                let z: f64 = row.iter().sum();
                row.iter_mut().for_each(|v| *v /= z);
                (row, mask)
            })
    })
}

proptest! {
    #[test]
    fn modify_row_is_stochastic((row, mask) in row_and_mask()) {
        let out = modify_row(&row, &mask).unwrap();
        prop_assert!(out.iter().all(|&v| v >= 0.0));
        prop_assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        for (a, b) in row.iter().zip(&out) {
            if *a == 0.0 {
                prop_assert_eq!(*b, 0.0);
            }
        }
    }

    #[test]
    fn normalization_is_affine_invariant(
        scores in prop::collection::vec(0.0f64..10.0, 1..6),
        a in 0.5f64..4.0,
        b in -5.0f64..5.0,
    ) {
        let spans: Vec<TokenSpan> = (0..scores.len()).map(|i| TokenSpan { start: 1 + 3 * i, end: 3 + 3 * i }).collect();
        let len = 2 + 3 * scores.len();
        let base = normalize_scores(&scores, &spans, len).unwrap();
        let moved: Vec<f64> = scores.iter().map(|s| a * s + b).collect();
        let other = normalize_scores(&moved, &spans, len).unwrap();
        for (x, y) in base.values().iter().zip(other.values()) {
            prop_assert!((x - y).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(x));
        }
    }
}
