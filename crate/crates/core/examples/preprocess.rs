//! Turns a JSONL file of raw threads into a corpus directory: tokenized,
//! stemmed bags of words over a training-split vocabulary.
//!
//! Usage: `cargo run --example preprocess [input.jsonl] [out_dir]`

use std::path::PathBuf;

use ddtm::corpus::{ingest_with, read_corpus, write_corpus, PipelineConfig};

fn main() -> ddtm::Result<()> {
    let mut args = std::env::args().skip(1);
    let input = args.next().map_or_else(
        || PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/data/sample_threads.jsonl"),
        PathBuf::from,
    );
    let out = args.next().map_or_else(
        || std::env::temp_dir().join("ddtm_sample_corpus"),
        PathBuf::from,
    );
    let cfg = PipelineConfig {
        test_fraction: 0.25,
        ..PipelineConfig::english()
    };
    let ingested = ingest_with(&input, &cfg, None, true)?;
    for s in &ingested.skipped {
        println!("skipped line {}: {}", s.line, s.message);
    }
    let corpus = ingested.corpus;
    write_corpus(&out, &corpus)?;
    println!(
        "{} train threads, {} test threads, {} word types, written to {}",
        corpus.train.len(),
        corpus.test.len(),
        corpus.vocab_size(),
        out.display()
    );
    let thread = &corpus.train[0];
    println!("thread {} ({}):", thread.id, thread.subreddit);
    for c in &thread.comments {
        let words: Vec<String> = c
            .counts
            .iter()
            .map(|&(w, n)| format!("{}x{n}", corpus.vocab.token(w as usize)))
            .collect();
        println!("  {} parent={:?} {}", c.id, c.parent, words.join(" "));
    }
    assert_eq!(read_corpus(&out)?, corpus);
    Ok(())
}
