//! On-disk layout of a preprocessed corpus directory:
//!
//! * `threads.jsonl`: one bag-of-words thread per line
//! * `vocab.txt`: one token per line, line number = word id
//! * `splits.json`: `{"train": [thread ids], "test": [thread ids]}`

use std::collections::HashMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CommentBag, Corpus, Thread, Vocabulary};
use crate::error::{Error, Result};

pub const THREADS_FILE: &str = "threads.jsonl";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const SPLITS_FILE: &str = "splits.json";

#[derive(Serialize, Deserialize)]
struct CommentRecord {
    id: String,
    parent: Option<usize>,
    counts: Vec<(u32, u32)>,
    upvotes: i64,
    has_deleted_child: bool,
}

#[derive(Serialize, Deserialize)]
struct ThreadRecord {
    id: String,
    subreddit: String,
    comments: Vec<CommentRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

pub fn write_threads(path: &Path, threads: &[Thread]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for t in threads {
        let rec = ThreadRecord {
            id: t.id.clone(),
            subreddit: t.subreddit.clone(),
            comments: t
                .comments
                .iter()
                .map(|c| CommentRecord {
                    id: c.id.clone(),
                    parent: c.parent,
                    counts: c.counts.clone(),
                    upvotes: c.upvotes,
                    has_deleted_child: c.has_deleted_child,
                })
                .collect(),
        };
        let line = serde_json::to_string(&rec).expect("thread records serialize");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_threads(path: &Path) -> Result<Vec<Thread>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ThreadRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        let comments = rec
            .comments
            .into_iter()
            .map(|c| {
                let mut bag = CommentBag::new(c.id, c.counts);
                bag.parent = c.parent;
                bag.upvotes = c.upvotes;
                bag.has_deleted_child = c.has_deleted_child;
                bag
            })
            .collect();
        out.push(Thread::new(rec.id, rec.subreddit, comments)?);
    }
    Ok(out)
}

pub fn write_splits(path: &Path, corpus: &Corpus) -> Result<()> {
    let splits = Splits {
        train: corpus.train.iter().map(|t| t.id.clone()).collect(),
        test: corpus.test.iter().map(|t| t.id.clone()).collect(),
    };
    let s = serde_json::to_string_pretty(&splits).expect("splits serialize");
    std::fs::write(path, s + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_splits(path: &Path) -> Result<Splits> {
    let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&s).map_err(|e| Error::Parse {
        line: e.line(),
        message: e.to_string(),
    })
}

pub fn write_corpus(dir: &Path, corpus: &Corpus) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let all: Vec<Thread> = corpus.all_threads().cloned().collect();
    write_threads(&dir.join(THREADS_FILE), &all)?;
    corpus.vocab.write(&dir.join(VOCAB_FILE))?;
    write_splits(&dir.join(SPLITS_FILE), corpus)
}

pub fn read_corpus(dir: &Path) -> Result<Corpus> {
    let vocab = Vocabulary::read(&dir.join(VOCAB_FILE))?;
    let threads = read_threads(&dir.join(THREADS_FILE))?;
    let splits = read_splits(&dir.join(SPLITS_FILE))?;
    for t in &threads {
        for c in &t.comments {
            if let Some(&(w, _)) = c.counts.last() {
                if w as usize >= vocab.len() {
                    return Err(Error::InvalidThread {
                        thread: t.id.clone(),
                        message: format!("word id {w} outside vocabulary of size {}", vocab.len()),
                    });
                }
            }
        }
    }
    let mut by_id: HashMap<String, Thread> =
        threads.into_iter().map(|t| (t.id.clone(), t)).collect();
    let mut take = |ids: &[String]| -> Result<Vec<Thread>> {
        ids.iter()
            .map(|id| {
                by_id
                    .remove(id)
                    .ok_or_else(|| Error::NotFound(format!("thread {id} listed in splits")))
            })
            .collect()
    };
    let train = take(&splits.train)?;
    let test = take(&splits.test)?;
    Ok(Corpus { vocab, train, test })
}
