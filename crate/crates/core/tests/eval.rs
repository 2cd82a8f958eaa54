//! Retrieval, downstream tasks and the evaluation report.

mod common;

use ddtm::corpus::{planted_params, random_shapes, synth_corpus, PlantedConfig, SynthSampler};
use ddtm::eval::{
    dice, embed_threads, evaluate, fit_deletion_classifier, fit_upvote_regressor, precision_recall,
    rank, AisConfig, EvalOptions, FeatureSource, LogisticConfig, RetrievalItem,
};
use ddtm::model::{apply_variant, Variant};
use ddtm::MfSchedule;

fn item(id: &str, label: &str, bits: &[u8]) -> RetrievalItem {
    RetrievalItem {
        id: id.into(),
        label: label.into(),
        bits: bits.iter().map(|&b| b == 1).collect(),
    }
}

#[test]
fn dice_matches_hand_values() {
    let b = |s: &[u8]| s.iter().map(|&x| x == 1).collect::<Vec<_>>();
    assert_eq!(dice(&b(&[1, 1, 0, 0]), &b(&[1, 0, 1, 0])), 0.5);
    assert_eq!(dice(&b(&[1, 1, 1, 0]), &b(&[1, 1, 0, 0])), 0.8);
    assert_eq!(dice(&b(&[1, 0]), &b(&[0, 1])), 0.0);
    assert_eq!(dice(&b(&[0, 0]), &b(&[0, 0])), 1.0);
}

#[test]
fn ranking_orders_by_score_then_id() {
    let cands = [
        item("d", "x", &[1, 1, 0]),
        item("b", "x", &[1, 0, 0]),
        item("a", "x", &[1, 0, 0]),
        item("c", "x", &[0, 0, 1]),
    ];
    let r = rank(&[true, false, false], &cands, 3, Some("b"));
    let ids: Vec<&str> = r.hits.iter().map(|h| h.id.as_str()).collect();
    assert_eq!(ids, ["a", "d", "c"]);
    assert!(!r.degenerate_query);
    assert!(rank(&[false, false, false], &cands, 1, None).degenerate_query);
}

#[test]
fn precision_recall_matches_hand_computation() {
    // Scores against the query: r1 = 1, w1 = 2/3, r2 = 1/2, w2 = 0.
    let q = item("q", "A", &[1, 1, 0, 0]);
    let cands = [
        item("r1", "A", &[1, 1, 0, 0]),
        item("w1", "B", &[1, 0, 0, 0]),
        item("r2", "A", &[1, 0, 1, 1]),
        item("w2", "B", &[0, 0, 1, 1]),
    ];
    let pr = precision_recall(&[q], &cands);
    assert_eq!(pr.precision, [1.0, 0.5, 2.0 / 3.0, 0.5]);
    assert_eq!(pr.recall, [0.5, 0.5, 1.0, 1.0]);
    assert_eq!(pr.interpolated_precision(0.75), 2.0 / 3.0);
    let csv = pr.to_csv();
    assert!(csv.starts_with("k,recall,precision\n1,0.5,1\n"));
}

#[test]
fn perfect_curve_dominates_a_random_one() {
    let cands: Vec<RetrievalItem> = (0..20)
        .map(|i| {
            item(
                &format!("c{i:02}"),
                if i % 2 == 0 { "A" } else { "B" },
                &[(i % 2 == 0) as u8, (i % 2) as u8],
            )
        })
        .collect();
    let queries = vec![item("qa", "A", &[1, 0]), item("qb", "B", &[0, 1])];
    let good = precision_recall(&queries, &cands);
    let flat: Vec<RetrievalItem> = cands
        .iter()
        .map(|c| RetrievalItem {
            bits: vec![true, true],
            ..c.clone()
        })
        .collect();
    let bad = precision_recall(&queries, &flat);
    assert_eq!(good.precision_at(10), 1.0);
    assert!(good.dominates(&bad, 0.5));
    assert!(!bad.dominates(&good, 0.5));
}

#[test]
fn regression_recovers_a_noiseless_linear_map() {
    let mut rng = common::rng(71);
    use rand::Rng;
    let x: Vec<Vec<f64>> = (0..40)
        .map(|_| (0..3).map(|_| rng.random::<f64>()).collect())
        .collect();
    let y: Vec<f64> = x
        .iter()
        .map(|r| 1.5 + 2.0 * r[0] - 3.0 * r[1] + 0.25 * r[2])
        .collect();
    let m = fit_upvote_regressor(&x, &y).unwrap();
    for (w, want) in m.weights.iter().zip([2.0, -3.0, 0.25]) {
        assert!((w - want).abs() < 1e-9);
    }
    assert!((m.intercept - 1.5).abs() < 1e-9);
    assert!(m.mse(&x, &y).unwrap() < 1e-18);
    assert!(!m.ridge_fallback);
}

#[test]
fn classifier_separates_separable_data() {
    let x: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64 / 30.0, 0.5]).collect();
    let labels: Vec<bool> = (0..30).map(|i| i >= 15).collect();
    let cfg = LogisticConfig {
        max_iters: 20_000,
        ..LogisticConfig::default()
    };
    let m = fit_deletion_classifier(&x, &labels, &cfg).unwrap();
    assert_eq!(m.accuracy(&x, &labels).unwrap(), 1.0);
    assert!(m.constant.is_none());
}

fn planted() -> (ddtm::Corpus, ddtm::ModelParams) {
    let cfg = PlantedConfig {
        vocab_size: 10,
        comment_bits: 2,
        thread_bits: 2,
        max_comments: 3,
        ..PlantedConfig::default()
    };
    let truth = planted_params(&cfg, 81).unwrap();
    let shapes = random_shapes(&cfg, 60, 82).unwrap();
    let corpus = synth_corpus(&truth, &shapes, SynthSampler::default(), 83, 0.3, "p")
        .unwrap()
        .corpus;
    (corpus, truth)
}

#[test]
fn embeddings_follow_the_variant_feature_source() {
    let (corpus, truth) = planted();
    let emb = embed_threads(&corpus.test, &truth, &MfSchedule::default()).unwrap();
    let comments: usize = corpus.test.iter().map(|t| t.len()).sum();
    assert_eq!(emb.len(), comments);
    for e in &emb {
        assert_eq!(
            e.features(FeatureSource::for_variant(Variant::Ddtm)).len(),
            4
        );
        assert_eq!(
            e.features(FeatureSource::for_variant(Variant::RsComment))
                .len(),
            2
        );
        assert_eq!(
            e.features(FeatureSource::for_variant(Variant::RsThread)),
            e.psi0
        );
    }
}

#[test]
fn report_is_deterministic_and_carries_oracle_rows() {
    let (corpus, truth) = planted();
    let ais = AisConfig {
        num_intermediate: 200,
        num_runs: 5,
        seed: 3,
        ..AisConfig::default()
    };
    let opts = EvalOptions {
        oracle: true,
        ..EvalOptions::default()
    };
    let run = || {
        evaluate(
            &corpus.train,
            &corpus.test,
            &truth,
            &ais,
            &MfSchedule::default(),
            &opts,
        )
        .unwrap()
    };
    let (a, pr) = run();
    let (b, _) = run();
    assert_eq!(a.to_json(), b.to_json());
    let rows = a.oracle.as_ref().unwrap();
    assert_eq!(rows.len(), corpus.test.len());
    for (r, t) in rows.iter().zip(&corpus.test) {
        assert_eq!(
            r.exact_log_z,
            ddtm::eval::exact_log_z(&t.shape(), &truth).unwrap()
        );
        assert_eq!(r.abs_error, (r.ais_log_z - r.exact_log_z).abs());
    }
    assert!(pr.recall.windows(2).all(|w| w[1] >= w[0]));
    let p10 = a.precision_at_10.unwrap();
    assert!((0.0..=1.0).contains(&p10));
    assert!(a.perplexity_nats > 0.0 && a.upvote_mse.is_some() && a.deletion_accuracy.is_some());
}

#[test]
fn unigram_report_has_uniform_perplexity_for_uniform_bias() {
    let (corpus, truth) = planted();
    let mut p = apply_variant(&truth, Variant::Unigram);
    p.a.fill(0.0);
    let ais = AisConfig {
        num_intermediate: 10,
        num_runs: 2,
        ..AisConfig::default()
    };
    let (r, _) = evaluate(
        &corpus.train,
        &corpus.test,
        &p,
        &ais,
        &MfSchedule::default(),
        &EvalOptions::default(),
    )
    .unwrap();
    assert!((r.perplexity_nats - (10f64).ln()).abs() < 1e-12);
}
