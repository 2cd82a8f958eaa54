use std::collections::HashSet;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rayon::prelude::*;

use super::{
    build_vocab, canonical_order, preprocess_text, thread_from_raw, Corpus, PipelineConfig,
    RawThread, Vocabulary,
};
use crate::error::{Error, Result};
use crate::math::fnv64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Split assignment by hashing the thread id, so it does not depend on file order.
pub fn split_of(thread_id: &str, test_fraction: f64) -> Split {
    let bucket = fnv64(thread_id.as_bytes()) % 10_000;
    if (bucket as f64) < test_fraction * 10_000.0 {
        Split::Test
    } else {
        Split::Train
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Skipped {
    pub line: usize,
    pub thread: Option<String>,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub corpus: Corpus,
    pub skipped: Vec<Skipped>,
}

/// Strict ingestion: any malformed line or invalid thread is an error.
pub fn ingest_threads(
    path: &Path,
    cfg: &PipelineConfig,
    vocab: Option<&Vocabulary>,
) -> Result<Corpus> {
    ingest_with(path, cfg, vocab, false).map(|i| i.corpus)
}

/// Reads a JSONL thread file. With `skip_bad`, malformed lines and invalid
/// threads are recorded in [`Ingested::skipped`] instead of failing.
///
/// When `vocab` is `None` it is built from the training split.
pub fn ingest_with(
    path: &Path,
    cfg: &PipelineConfig,
    vocab: Option<&Vocabulary>,
    skip_bad: bool,
) -> Result<Ingested> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut raws: Vec<RawThread> = Vec::new();
    let mut skipped = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let checked = serde_json::from_str::<RawThread>(&line)
            .map_err(|e| Error::Parse {
                line: lineno,
                message: e.to_string(),
            })
            .and_then(|raw| {
                canonical_order(&raw)?;
                if !seen.insert(raw.id.clone()) {
                    return Err(Error::InvalidThread {
                        thread: raw.id.clone(),
                        message: "duplicate thread id".into(),
                    });
                }
                Ok(raw)
            });
        match checked {
            Ok(raw) => raws.push(raw),
            Err(e) if skip_bad => skipped.push(Skipped {
                line: lineno,
                thread: match &e {
                    Error::InvalidThread { thread, .. } => Some(thread.clone()),
                    _ => None,
                },
                message: e.to_string(),
            }),
            Err(Error::InvalidThread { thread, message }) => {
                return Err(Error::InvalidThread {
                    thread,
                    message: format!("line {lineno}: {message}"),
                })
            }
            Err(e) => return Err(e),
        }
    }

    let tokens: Vec<Vec<Vec<String>>> = raws
        .par_iter()
        .map(|t| {
            t.comments
                .iter()
                .map(|c| preprocess_text(&c.body, cfg))
                .collect()
        })
        .collect();
    let splits: Vec<Split> = raws
        .iter()
        .map(|t| split_of(&t.id, cfg.test_fraction))
        .collect();

    let vocab = match vocab {
        Some(v) => v.clone(),
        None => build_vocab(
            tokens
                .iter()
                .zip(&splits)
                .filter(|(_, s)| **s == Split::Train)
                .flat_map(|(t, _)| t.iter().map(Vec::as_slice)),
            cfg.vocab_cap,
        )?,
    };

    let threads: Vec<_> = raws
        .par_iter()
        .zip(tokens.par_iter())
        .map(|(raw, toks)| thread_from_raw(raw, &vocab, toks))
        .collect::<Result<_>>()?;

    let mut corpus = Corpus {
        vocab,
        train: Vec::new(),
        test: Vec::new(),
    };
    for (t, s) in threads.into_iter().zip(splits) {
        match s {
            Split::Train => corpus.train.push(t),
            Split::Test => corpus.test.push(t),
        }
    }
    Ok(Ingested { corpus, skipped })
}
