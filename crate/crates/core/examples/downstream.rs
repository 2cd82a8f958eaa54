//! Uses posterior bit means of a trained model as comment features: nearest
//! neighbours by Dice similarity, upvote regression and deleted-child
//! classification.
//!
//! Usage: `cargo run --release --example downstream [epochs]`

use std::path::Path;

use ddtm::corpus::{ingest_threads, PipelineConfig};
use ddtm::eval::{
    embed_threads, fit_deletion_classifier, fit_upvote_regressor, rank, upvote_target,
    FeatureSource, LogisticConfig, RetrievalItem,
};
use ddtm::model::{init_params, unigram_log_probs, HiddenConfig, Variant};
use ddtm::training::{train, TrainConfig};
use ddtm::MfSchedule;

fn main() -> ddtm::Result<()> {
    let epochs: usize = std::env::args()
        .nth(1)
        .map_or(30, |s| s.parse().expect("epoch count"));
    let input = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/data/sample_threads.jsonl");
    let corpus = ingest_threads(
        &input,
        &PipelineConfig {
            test_fraction: 0.25,
            ..PipelineConfig::english()
        },
        None,
    )?;
    let hidden = HiddenConfig::from_total_bits(6, Variant::Ddtm)?;
    let init = init_params(
        hidden,
        &unigram_log_probs(&corpus.train, corpus.vocab_size()),
        1,
    )?;
    let tcfg = TrainConfig {
        epochs,
        batch_size: 8,
        seed: 1,
        ..TrainConfig::default()
    };
    let params = train(&corpus.train, &[], init, &tcfg)?.params;

    let schedule = MfSchedule::default();
    let source = FeatureSource::for_variant(params.variant);
    let train_emb = embed_threads(&corpus.train, &params, &schedule)?;
    let test_emb = embed_threads(&corpus.test, &params, &schedule)?;
    let items: Vec<RetrievalItem> = train_emb
        .iter()
        .map(|e| RetrievalItem::new(&e.comment, &e.subreddit, &e.features(source)))
        .collect();
    let query = &test_emb[0];
    let q = RetrievalItem::new(&query.comment, &query.subreddit, &query.features(source));
    println!("neighbours of {} ({}):", query.comment, query.subreddit);
    for hit in rank(&q.bits, &items, 5, None).hits {
        println!(
            "  {:<8} {:<12} dice {:.3}",
            hit.id, items[hit.index].label, hit.score
        );
    }

    let features = |emb: &[ddtm::eval::CommentEmbedding]| {
        emb.iter().map(|e| e.features(source)).collect::<Vec<_>>()
    };
    let (x_train, x_test) = (features(&train_emb), features(&test_emb));
    let y = |emb: &[ddtm::eval::CommentEmbedding]| {
        emb.iter()
            .map(|e| upvote_target(e.upvotes))
            .collect::<Vec<_>>()
    };
    let reg = fit_upvote_regressor(&x_train, &y(&train_emb))?;
    println!(
        "upvote regression test mse {:.4}",
        reg.mse(&x_test, &y(&test_emb))?
    );
    let labels = |emb: &[ddtm::eval::CommentEmbedding]| {
        emb.iter().map(|e| e.has_deleted_child).collect::<Vec<_>>()
    };
    let clf = fit_deletion_classifier(&x_train, &labels(&train_emb), &LogisticConfig::default())?;
    println!(
        "deleted-child classification test accuracy {:.3}",
        clf.accuracy(&x_test, &labels(&test_emb))?
    );
    Ok(())
}
