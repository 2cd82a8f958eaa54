//! Samples threads from a planted model and shows the hidden bits that
//! generated one of them.
//!
//! Usage: `cargo run --release --example synthesize [threads] [seed]`

use ddtm::corpus::{planted_params, random_shapes, synth_corpus, PlantedConfig, SynthSampler};

fn main() -> ddtm::Result<()> {
    let mut args = std::env::args().skip(1);
    let threads: usize = args
        .next()
        .map_or(200, |s| s.parse().expect("thread count"));
    let seed: u64 = args.next().map_or(1, |s| s.parse().expect("seed"));
    let cfg = PlantedConfig::default();
    let truth = planted_params(&cfg, seed)?;
    let shapes = random_shapes(&cfg, threads, seed + 1)?;
    let synth = synth_corpus(
        &truth,
        &shapes,
        SynthSampler::default(),
        seed + 2,
        0.2,
        "planted",
    )?;
    let corpus = &synth.corpus;
    let comments: usize = corpus.all_threads().map(|t| t.len()).sum();
    println!(
        "{} threads, {comments} comments, {} word types",
        threads,
        corpus.vocab_size()
    );
    let thread = &corpus.train[0];
    let hidden = &synth.hidden[&thread.id];
    let bits = |v: &nalgebra::DVector<f64>| {
        v.iter()
            .map(|&b| if b > 0.5 { '1' } else { '0' })
            .collect::<String>()
    };
    println!("thread {} bits {}", thread.id, bits(&hidden.thread_bits));
    for (c, h) in thread.comments.iter().zip(&hidden.comment_bits) {
        let words: Vec<String> = c
            .counts
            .iter()
            .map(|&(w, n)| format!("{}x{n}", corpus.vocab.token(w as usize)))
            .collect();
        println!(
            "  {} parent={:?} bits {} words {}",
            c.id,
            c.parent,
            bits(h),
            words.join(" ")
        );
    }
    Ok(())
}
