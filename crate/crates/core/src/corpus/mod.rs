//! Reply-tree corpora: raw ingestion, text preprocessing, vocabulary and
//! bag-of-words threads.
//!
//! A [`Thread`] stores its comments in breadth-first order from the original
//! post, so index 0 is always the root and every parent precedes its children.
//! Children are visited in ascending comment-id order, which makes the layout
//! independent of the order comments appear in the input file.

mod ingest;
mod io;
mod synth;
mod text;
mod vocab;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use ingest::{ingest_threads, ingest_with, split_of, Ingested, Skipped, Split};
pub use io::{read_corpus, read_splits, read_threads, write_corpus, write_splits, write_threads};
pub use synth::{
    corpus_from_threads, planted_params, random_shapes, regime_params, synth_corpus, synth_regimes,
    synth_threads, PlantedConfig, SynthCorpus, SynthSampler,
};
pub use text::{preprocess_text, PipelineConfig, StemmerKind, ENGLISH_STOPWORDS};
pub use vocab::{build_vocab, Vocabulary};

/// One comment as it appears in the raw JSONL thread file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawComment {
    pub id: String,
    #[serde(default)]
    pub parent_id: Option<String>,
    #[serde(default)]
    pub body: String,
    #[serde(default)]
    pub upvotes: i64,
    #[serde(default)]
    pub has_deleted_child: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawThread {
    pub id: String,
    #[serde(default)]
    pub subreddit: String,
    pub comments: Vec<RawComment>,
}

/// Word counts and reply metadata of one comment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommentBag {
    pub id: String,
    /// Sparse `(word id, count)` pairs, sorted by word id, counts > 0.
    pub counts: Vec<(u32, u32)>,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub upvotes: i64,
    pub has_deleted_child: bool,
}

impl CommentBag {
    pub fn new(id: impl Into<String>, mut counts: Vec<(u32, u32)>) -> Self {
        counts.retain(|&(_, c)| c > 0);
        counts.sort_unstable_by_key(|&(k, _)| k);
        let mut merged: Vec<(u32, u32)> = Vec::with_capacity(counts.len());
        for (k, c) in counts {
            match merged.last_mut() {
                Some(last) if last.0 == k => last.1 += c,
                _ => merged.push((k, c)),
            }
        }
        CommentBag {
            id: id.into(),
            counts: merged,
            parent: None,
            children: Vec::new(),
            upvotes: 0,
            has_deleted_child: false,
        }
    }

    /// Number of words `D_n`.
    pub fn len(&self) -> usize {
        self.counts.iter().map(|&(_, c)| c as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn is_root(&self) -> bool {
        self.parent.is_none()
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    pub fn dense_counts(&self, k: usize) -> nalgebra::DVector<f64> {
        let mut x = nalgebra::DVector::zeros(k);
        for &(w, c) in &self.counts {
            x[w as usize] += c as f64;
        }
        x
    }
}

/// A reply tree of comment bags. Index 0 is the original post.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thread {
    pub id: String,
    pub subreddit: String,
    pub comments: Vec<CommentBag>,
}

impl Thread {
    /// Builds a thread from comments whose `parent` fields are already set.
    ///
    /// Comment 0 must be the only root and every parent index must precede its
    /// child. Children lists are recomputed from the parent fields.
    pub fn new(
        id: impl Into<String>,
        subreddit: impl Into<String>,
        mut comments: Vec<CommentBag>,
    ) -> Result<Self> {
        let id = id.into();
        if comments.is_empty() {
            return Err(Error::InvalidThread {
                thread: id,
                message: "thread has no comments".into(),
            });
        }
        for c in comments.iter_mut() {
            c.children.clear();
        }
        for n in 0..comments.len() {
            match (n, comments[n].parent) {
                (0, None) => {}
                (0, Some(_)) => {
                    return Err(Error::InvalidThread {
                        thread: id,
                        message: "comment 0 must be the root".into(),
                    })
                }
                (_, None) => {
                    return Err(Error::InvalidThread {
                        thread: id,
                        message: format!("comment {n} has no parent but is not the root"),
                    })
                }
                (_, Some(p)) if p >= n => {
                    return Err(Error::InvalidThread {
                        thread: id,
                        message: format!("comment {n} has parent {p} that does not precede it"),
                    })
                }
                (_, Some(p)) => comments[p].children.push(n),
            }
        }
        Ok(Thread {
            id,
            subreddit: subreddit.into(),
            comments,
        })
    }

    pub fn len(&self) -> usize {
        self.comments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.comments.is_empty()
    }

    /// Parent/child reply pairs `R`, parent first.
    pub fn reply_set(&self) -> Vec<(usize, usize)> {
        self.comments
            .iter()
            .enumerate()
            .filter_map(|(m, c)| c.parent.map(|p| (p, m)))
            .collect()
    }

    pub fn total_words(&self) -> usize {
        self.comments.iter().map(CommentBag::len).sum()
    }

    pub fn shape(&self) -> ThreadShape {
        ThreadShape {
            parents: self.comments.iter().map(|c| c.parent).collect(),
            lengths: self.comments.iter().map(CommentBag::len).collect(),
        }
    }

    /// Height of every comment: 0 for leaves, 1 + max child height otherwise.
    pub fn heights(&self) -> Vec<usize> {
        self.shape().heights()
    }

    /// All comments pooled into a single root comment.
    pub fn merged(&self) -> Thread {
        let counts = self
            .comments
            .iter()
            .flat_map(|c| c.counts.iter().copied())
            .collect();
        let mut bag = CommentBag::new(format!("{}#merged", self.id), counts);
        bag.upvotes = self.comments.iter().map(|c| c.upvotes).sum();
        bag.has_deleted_child = self.comments.iter().any(|c| c.has_deleted_child);
        Thread {
            id: self.id.clone(),
            subreddit: self.subreddit.clone(),
            comments: vec![bag],
        }
    }

    pub fn comment_index(&self, comment_id: &str) -> Option<usize> {
        self.comments.iter().position(|c| c.id == comment_id)
    }
}

/// Tree structure and comment lengths of a thread, without the words.
///
/// This is all the normalizer depends on, so it doubles as a cache key.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ThreadShape {
    pub parents: Vec<Option<usize>>,
    pub lengths: Vec<usize>,
}

impl ThreadShape {
    pub fn new(parents: Vec<Option<usize>>, lengths: Vec<usize>) -> Result<Self> {
        let shape = ThreadShape { parents, lengths };
        shape.validate()?;
        Ok(shape)
    }

    /// A chain `0 -> 1 -> ... -> n-1` with the given lengths.
    pub fn chain(lengths: Vec<usize>) -> Self {
        let parents = (0..lengths.len())
            .map(|n| if n == 0 { None } else { Some(n - 1) })
            .collect();
        ThreadShape { parents, lengths }
    }

    fn validate(&self) -> Result<()> {
        if self.parents.len() != self.lengths.len() || self.parents.is_empty() {
            return Err(Error::Shape(
                "thread shape needs one length per comment and at least one comment".into(),
            ));
        }
        for (n, p) in self.parents.iter().enumerate() {
            let ok = match p {
                None => n == 0,
                Some(p) => n > 0 && *p < n,
            };
            if !ok {
                return Err(Error::Shape(format!("bad parent for comment {n}")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.parents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parents.is_empty()
    }

    pub fn children(&self) -> Vec<Vec<usize>> {
        let mut ch = vec![Vec::new(); self.len()];
        for (m, p) in self.parents.iter().enumerate() {
            if let Some(p) = p {
                ch[*p].push(m);
            }
        }
        ch
    }

    pub fn total_words(&self) -> usize {
        self.lengths.iter().sum()
    }

    pub fn heights(&self) -> Vec<usize> {
        let mut h = vec![0usize; self.len()];
        // parents precede children, so a reverse scan sees every child first
        for m in (1..self.len()).rev() {
            if let Some(p) = self.parents[m] {
                h[p] = h[p].max(h[m] + 1);
            }
        }
        h
    }
}

/// A vocabulary plus train/test collections of threads.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub vocab: Vocabulary,
    pub train: Vec<Thread>,
    pub test: Vec<Thread>,
}

impl Corpus {
    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn all_threads(&self) -> impl Iterator<Item = &Thread> {
        self.train.iter().chain(self.test.iter())
    }

    pub fn find_comment(&self, comment_id: &str) -> Option<(&Thread, usize)> {
        self.all_threads()
            .find_map(|t| t.comment_index(comment_id).map(|n| (t, n)))
    }
}

/// Builds a thread from raw comments, tokenized with `tokenize`.
///
/// Validates the parent graph (unique ids, one root, no dangling parents, no
/// cycles) and lays the comments out breadth-first with children sorted by id.
pub(crate) fn thread_from_raw(
    raw: &RawThread,
    vocab: &Vocabulary,
    tokens: &[Vec<String>],
) -> Result<Thread> {
    let order = canonical_order(raw)?;
    let mut new_index = vec![0usize; raw.comments.len()];
    for (new, &old) in order.iter().enumerate() {
        new_index[old] = new;
    }
    let by_id: HashMap<&str, usize> = raw
        .comments
        .iter()
        .enumerate()
        .map(|(i, c)| (c.id.as_str(), i))
        .collect();
    let comments = order
        .iter()
        .map(|&old| {
            let rc = &raw.comments[old];
            let mut bag = CommentBag::new(rc.id.clone(), vocab.count(&tokens[old]));
            bag.parent = rc.parent_id.as_deref().map(|pid| new_index[by_id[pid]]);
            bag.upvotes = rc.upvotes;
            bag.has_deleted_child = rc.has_deleted_child;
            bag
        })
        .collect();
    Thread::new(raw.id.clone(), raw.subreddit.clone(), comments)
}

/// Breadth-first order of raw comment indices, children sorted by id.
pub(crate) fn canonical_order(raw: &RawThread) -> Result<Vec<usize>> {
    let fail = |message: String| Error::InvalidThread {
        thread: raw.id.clone(),
        message,
    };
    if raw.comments.is_empty() {
        return Err(fail("thread has no comments".into()));
    }
    let mut by_id: HashMap<&str, usize> = HashMap::with_capacity(raw.comments.len());
    for (i, c) in raw.comments.iter().enumerate() {
        if by_id.insert(c.id.as_str(), i).is_some() {
            return Err(fail(format!("duplicate comment id {:?}", c.id)));
        }
    }
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); raw.comments.len()];
    let mut roots = Vec::new();
    for (i, c) in raw.comments.iter().enumerate() {
        match &c.parent_id {
            None => roots.push(i),
            Some(pid) => match by_id.get(pid.as_str()) {
                Some(&p) => children[p].push(i),
                None => {
                    return Err(fail(format!(
                        "comment {:?} has dangling parent {:?}",
                        c.id, pid
                    )))
                }
            },
        }
    }
    if roots.len() != 1 {
        return Err(fail(format!(
            "expected exactly one root comment, found {}",
            roots.len()
        )));
    }
    for ch in children.iter_mut() {
        ch.sort_by(|&a, &b| raw.comments[a].id.cmp(&raw.comments[b].id));
    }
    let mut order = Vec::with_capacity(raw.comments.len());
    let mut queue = std::collections::VecDeque::from([roots[0]]);
    while let Some(i) = queue.pop_front() {
        order.push(i);
        queue.extend(children[i].iter().copied());
    }
    if order.len() != raw.comments.len() {
        return Err(fail("parent references contain a cycle".into()));
    }
    Ok(order)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(id: &str, parent: Option<&str>) -> RawComment {
        RawComment {
            id: id.into(),
            parent_id: parent.map(Into::into),
            body: String::new(),
            upvotes: 0,
            has_deleted_child: false,
        }
    }

    #[test]
    fn bag_merges_duplicate_words() {
        let b = CommentBag::new("c", vec![(3, 1), (1, 2), (3, 2), (5, 0)]);
        assert_eq!(b.counts, vec![(1, 2), (3, 3)]);
        assert_eq!(b.len(), 5);
    }

    #[test]
    fn cycle_is_rejected() {
        let t = RawThread {
            id: "t1".into(),
            subreddit: "s".into(),
            comments: vec![raw("op", None), raw("a", Some("b")), raw("b", Some("a"))],
        };
        let err = canonical_order(&t).unwrap_err().to_string();
        assert!(err.contains("t1") && err.contains("cycle"), "{err}");
    }

    #[test]
    fn two_roots_are_rejected() {
        let t = RawThread {
            id: "t2".into(),
            subreddit: "s".into(),
            comments: vec![raw("op", None), raw("x", None)],
        };
        assert!(canonical_order(&t).is_err());
    }

    #[test]
    fn heights_of_branching_tree() {
        let s = ThreadShape::new(vec![None, Some(0), Some(0), Some(1)], vec![1; 4]).unwrap();
        assert_eq!(s.heights(), vec![2, 1, 0, 0]);
        assert_eq!(s.children(), vec![vec![1, 2], vec![3], vec![], vec![]]);
    }

    #[test]
    fn thread_new_requires_topological_parents() {
        let mut a = CommentBag::new("a", vec![]);
        let mut b = CommentBag::new("b", vec![]);
        a.parent = None;
        b.parent = Some(1);
        assert!(Thread::new("t", "s", vec![a, b]).is_err());
    }
}
