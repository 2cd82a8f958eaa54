//! Trains DDTM on the sample threads, reports held-out perplexity and prints
//! the words each topic bit promotes.
//!
//! Usage: `cargo run --release --example train_topics [epochs] [bits]`

use std::path::Path;

use ddtm::corpus::{ingest_threads, PipelineConfig};
use ddtm::eval::{perplexity, AisConfig};
use ddtm::model::{init_params, save_checkpoint, unigram_log_probs, HiddenConfig, Variant};
use ddtm::training::{train, TrainConfig};
use ddtm::MfSchedule;

fn top_words(row: impl Iterator<Item = f64>, vocab: &ddtm::Vocabulary, n: usize) -> String {
    let mut scored: Vec<(usize, f64)> = row.enumerate().collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored
        .iter()
        .take(n)
        .map(|&(w, _)| vocab.token(w))
        .collect::<Vec<_>>()
        .join(" ")
}

fn main() -> ddtm::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs: usize = args.next().map_or(30, |s| s.parse().expect("epoch count"));
    let bits: usize = args.next().map_or(4, |s| s.parse().expect("bit count"));
    let input = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/data/sample_threads.jsonl");
    let corpus = ingest_threads(
        &input,
        &PipelineConfig {
            test_fraction: 0.25,
            ..PipelineConfig::english()
        },
        None,
    )?;
    let hidden = HiddenConfig::from_total_bits(bits, Variant::Ddtm)?;
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
    let fitted = train(&corpus.train, &corpus.test, init, &tcfg)?;
    for e in fitted.history.iter().step_by((epochs / 5).max(1)) {
        println!(
            "epoch {:>3} mean approximate log-likelihood {:.3}",
            e.epoch, e.mean_approx_ll
        );
    }
    let ais = AisConfig {
        num_intermediate: 500,
        num_runs: 10,
        ..AisConfig::default()
    };
    let ppl = perplexity(&corpus.test, &fitted.params, &ais, &MfSchedule::default())?;
    println!(
        "held-out perplexity {:.2} ({:.3} nats per word)",
        ppl.exp, ppl.nats
    );
    let p = &fitted.params;
    for f in 0..p.u.nrows() {
        println!(
            "comment bit {f}: {}",
            top_words(p.u.row(f).iter().copied(), &corpus.vocab, 6)
        );
    }
    for f in 0..p.v.nrows() {
        println!(
            "thread bit {f}: {}",
            top_words(p.v.row(f).iter().copied(), &corpus.vocab, 6)
        );
    }
    let out = std::env::temp_dir().join("ddtm_sample_model.ddtm");
    save_checkpoint(p, &out)?;
    println!("checkpoint written to {}", out.display());
    Ok(())
}
