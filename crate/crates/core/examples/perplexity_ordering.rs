//! Trains DDTM and its baselines on a planted corpus with reply coupling and
//! compares their held-out AIS perplexities with the generating model's.
//!
//! Usage: `cargo run --release --example perplexity_ordering [threads] [epochs] [seed]`

use std::time::Instant;

use ddtm::corpus::{planted_params, random_shapes, synth_corpus, PlantedConfig, SynthSampler};
use ddtm::eval::{perplexity, AisConfig};
use ddtm::model::{init_params, unigram_log_probs, HiddenConfig, Variant};
use ddtm::training::{train, AdamConfig, HeldoutMetric, TrainConfig};
use ddtm::MfSchedule;

fn main() -> ddtm::Result<()> {
    let mut args = std::env::args().skip(1);
    let threads: usize = args
        .next()
        .map_or(2000, |s| s.parse().expect("thread count"));
    let epochs: usize = args.next().map_or(30, |s| s.parse().expect("epoch count"));
    let seed: u64 = args.next().map_or(1, |s| s.parse().expect("seed"));
    let cfg = PlantedConfig::default();
    let truth = planted_params(&cfg, seed)?;
    let shapes = random_shapes(&cfg, threads, seed + 1)?;
    let corpus = synth_corpus(
        &truth,
        &shapes,
        SynthSampler::default(),
        seed + 2,
        0.2,
        "planted",
    )?
    .corpus;
    println!("train={} test={}", corpus.train.len(), corpus.test.len());

    let schedule = MfSchedule::default();
    let ais = AisConfig {
        seed: 11,
        ..AisConfig::default()
    };
    let start = Instant::now();
    let truth_ppl = perplexity(&corpus.test, &truth, &ais, &schedule)?;
    println!(
        "{:<12} nats={:.4} se={:.4} ({:.1}s)",
        "truth",
        truth_ppl.nats,
        truth_ppl.mean_se,
        start.elapsed().as_secs_f64()
    );

    // Every fifth training thread is held out for early stopping.
    let (mut fit, mut valid) = (Vec::new(), Vec::new());
    for (i, t) in corpus.train.iter().enumerate() {
        if i % 5 == 4 {
            valid.push(t.clone());
        } else {
            fit.push(t.clone());
        }
    }
    let unigram = unigram_log_probs(&fit, corpus.vocab_size());
    for variant in [
        Variant::Ddtm,
        Variant::DdtmNocpl,
        Variant::RsComment,
        Variant::Unigram,
    ] {
        let start = Instant::now();
        let hidden = HiddenConfig::from_total_bits(cfg.comment_bits + cfg.thread_bits, variant)?;
        let tcfg = TrainConfig {
            epochs,
            seed: 5,
            batch_size: 50,
            adam: AdamConfig {
                step_size: 0.005,
                ..AdamConfig::default()
            },
            patience: Some(5),
            keep_best: true,
            heldout_metric: HeldoutMetric::AisPerplexity {
                ais: AisConfig {
                    num_intermediate: 500,
                    num_runs: 10,
                    seed: 13,
                    ..AisConfig::default()
                },
            },
            ..TrainConfig::default()
        };
        let fitted = train(&fit, &valid, init_params(hidden, &unigram, 3)?, &tcfg)?;
        let ppl = perplexity(&corpus.test, &fitted.params, &ais, &schedule)?;
        println!(
            "{:<12} nats={:.4} se={:.4} best_epoch={} ({:.1}s)",
            variant.name(),
            ppl.nats,
            ppl.mean_se,
            fitted.best_epoch,
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
