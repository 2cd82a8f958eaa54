use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

/// Token list ordered by descending training frequency, ties lexicographic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.contains('\n') {
                return Err(Error::Config(format!("invalid vocabulary token at {i}")));
            }
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::Config(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Vocabulary { tokens, index })
    }

    /// `w000`, `w001`, ... for synthetic corpora.
    pub fn synthetic(k: usize) -> Self {
        let width = (k.max(2) - 1).to_string().len().max(3);
        let tokens = (0..k).map(|i| format!("w{i:0width$}")).collect();
        Vocabulary::from_tokens(tokens).expect("synthetic tokens are unique")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    /// Sparse counts of in-vocabulary tokens; unknown tokens are dropped.
    pub fn count(&self, tokens: &[String]) -> Vec<(u32, u32)> {
        let mut counts: HashMap<u32, u32> = HashMap::new();
        for t in tokens {
            if let Some(id) = self.id(t) {
                *counts.entry(id).or_default() += 1;
            }
        }
        let mut v: Vec<_> = counts.into_iter().collect();
        v.sort_unstable();
        v
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut s = String::new();
        for t in &self.tokens {
            s.push_str(t);
            s.push('\n');
        }
        std::fs::write(path, s).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Vocabulary::from_tokens(s.lines().map(str::to_string).collect())
    }
}

/// Keeps the `cap` most frequent tokens of the training token lists.
pub fn build_vocab<'a, I>(docs: I, cap: usize) -> Result<Vocabulary>
where
    I: IntoIterator<Item = &'a [String]>,
{
    if cap < 2 {
        return Err(Error::Config(format!(
            "vocabulary cap must be >= 2, got {cap}"
        )));
    }
    let mut freq: HashMap<&str, usize> = HashMap::new();
    for doc in docs {
        for t in doc {
            *freq.entry(t.as_str()).or_default() += 1;
        }
    }
    if freq.is_empty() {
        return Err(Error::EmptyCorpus(
            "no tokens in the training corpus to build a vocabulary from".into(),
        ));
    }
    let mut ranked: Vec<(&str, usize)> = freq.into_iter().collect();
    ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(cap);
    Vocabulary::from_tokens(ranked.into_iter().map(|(t, _)| t.to_string()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn docs(s: &[&str]) -> Vec<Vec<String>> {
        s.iter()
            .map(|d| d.split_whitespace().map(str::to_string).collect())
            .collect()
    }

    fn build(s: &[&str], cap: usize) -> Result<Vocabulary> {
        let d = docs(s);
        build_vocab(d.iter().map(Vec::as_slice), cap)
    }

    #[test]
    fn frequency_then_lexicographic() {
        assert_eq!(build(&["a a b", "b c"], 2).unwrap().tokens(), ["a", "b"]);
        assert_eq!(build(&["x"], 10).unwrap().tokens(), ["x"]);
        assert_eq!(build(&["a b c"], 2).unwrap().tokens(), ["a", "b"]);
        assert_eq!(
            build(&["c c c b a a"], 10).unwrap().tokens(),
            ["c", "a", "b"]
        );
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(matches!(build(&["", " "], 4), Err(Error::EmptyCorpus(_))));
        assert!(matches!(build(&["a"], 1), Err(Error::Config(_))));
    }

    #[test]
    fn counting_drops_oov() {
        let v = build(&["a b"], 5).unwrap();
        let toks: Vec<String> = ["b", "z", "b", "a"].iter().map(|s| s.to_string()).collect();
        assert_eq!(v.count(&toks), vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn duplicate_tokens_rejected() {
        assert!(Vocabulary::from_tokens(vec!["a".into(), "a".into()]).is_err());
    }
}
