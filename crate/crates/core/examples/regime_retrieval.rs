//! Retrieves held-out comments among training comments on a corpus with two
//! planted thread-level regimes, comparing DDTM with the comment-level
//! baseline.
//!
//! Usage: `cargo run --release --example regime_retrieval [threads] [epochs] [seed]`

use ddtm::corpus::{synth_regimes, PlantedConfig, SynthSampler};
use ddtm::eval::{embed_threads, precision_recall, FeatureSource, PrCurve, RetrievalItem};
use ddtm::model::{init_params, unigram_log_probs, HiddenConfig, Variant};
use ddtm::training::{train, AdamConfig, TrainConfig};
use ddtm::{MfSchedule, ModelParams, Thread};

fn items(
    threads: &[Thread],
    params: &ModelParams,
    limit: usize,
) -> ddtm::Result<Vec<RetrievalItem>> {
    let source = FeatureSource::for_variant(params.variant);
    Ok(embed_threads(threads, params, &MfSchedule::default())?
        .iter()
        .take(limit)
        .map(|e| {
            RetrievalItem::new(
                format!("{}/{}", e.thread, e.comment),
                &e.subreddit,
                &e.features(source),
            )
        })
        .collect())
}

fn main() -> ddtm::Result<()> {
    let mut args = std::env::args().skip(1);
    let threads: usize = args
        .next()
        .map_or(1000, |s| s.parse().expect("thread count"));
    let epochs: usize = args.next().map_or(20, |s| s.parse().expect("epoch count"));
    let seed: u64 = args.next().map_or(21, |s| s.parse().expect("seed"));
    let cfg = PlantedConfig {
        regime_bias: 1.0,
        thread_emission: 1.0,
        ..PlantedConfig::default()
    };
    let (synth, _) = synth_regimes(&cfg, threads, 2, SynthSampler::default(), seed, 0.2)?;
    let corpus = synth.corpus;
    println!("train={} test={}", corpus.train.len(), corpus.test.len());
    let unigram = unigram_log_probs(&corpus.train, corpus.vocab_size());
    let mut curves: Vec<(Variant, PrCurve)> = Vec::new();
    for variant in [Variant::Ddtm, Variant::RsComment] {
        let hidden = HiddenConfig::from_total_bits(cfg.comment_bits + cfg.thread_bits, variant)?;
        let tcfg = TrainConfig {
            epochs,
            seed: 5,
            batch_size: 50,
            adam: AdamConfig {
                step_size: 0.01,
                ..AdamConfig::default()
            },
            ..TrainConfig::default()
        };
        let fitted = train(&corpus.train, &[], init_params(hidden, &unigram, 3)?, &tcfg)?;
        let queries = items(&corpus.test, &fitted.params, 300)?;
        let candidates = items(&corpus.train, &fitted.params, usize::MAX)?;
        let pr = precision_recall(&queries, &candidates);
        println!(
            "{:<12} p@10={:.3} p(r=0.25)={:.3} p(r=0.5)={:.3} degenerate={}",
            variant.name(),
            pr.precision_at(10),
            pr.interpolated_precision(0.25),
            pr.interpolated_precision(0.5),
            pr.degenerate_queries
        );
        curves.push((variant, pr));
    }
    println!(
        "ddtm dominates up to recall 0.5: {}",
        curves[0].1.dominates(&curves[1].1, 0.5)
    );
    Ok(())
}
