use std::collections::BTreeSet;

use rust_stemmers::{Algorithm, Stemmer};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StemmerKind {
    #[default]
    None,
    SnowballEnglish,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub lowercase: bool,
    pub strip_special_chars: bool,
    pub url_to_domain_token: bool,
    pub stemmer: StemmerKind,
    /// Compared against stemmed tokens; the list itself is stemmed too.
    pub stopwords: BTreeSet<String>,
    /// Also drop the words of [`ENGLISH_STOPWORDS`].
    pub english_stopwords: bool,
    pub vocab_cap: usize,
    /// Fraction of threads routed to the test split by id hash.
    pub test_fraction: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            lowercase: true,
            strip_special_chars: true,
            url_to_domain_token: true,
            stemmer: StemmerKind::None,
            stopwords: BTreeSet::new(),
            english_stopwords: false,
            vocab_cap: 10_000,
            test_fraction: 0.1,
        }
    }
}

impl PipelineConfig {
    /// Settings for English forum text: Snowball stemming and a standard
    /// English stop-word list.
    pub fn english() -> Self {
        PipelineConfig {
            stemmer: StemmerKind::SnowballEnglish,
            english_stopwords: true,
            ..Default::default()
        }
    }
}

pub const ENGLISH_STOPWORDS: &[&str] = &[
    "a",
    "about",
    "above",
    "after",
    "again",
    "against",
    "all",
    "am",
    "an",
    "and",
    "any",
    "are",
    "as",
    "at",
    "be",
    "because",
    "been",
    "before",
    "being",
    "below",
    "between",
    "both",
    "but",
    "by",
    "can",
    "could",
    "did",
    "do",
    "does",
    "doing",
    "down",
    "during",
    "each",
    "few",
    "for",
    "from",
    "further",
    "had",
    "has",
    "have",
    "having",
    "he",
    "her",
    "here",
    "hers",
    "herself",
    "him",
    "himself",
    "his",
    "how",
    "i",
    "if",
    "in",
    "into",
    "is",
    "it",
    "its",
    "itself",
    "just",
    "me",
    "more",
    "most",
    "my",
    "myself",
    "no",
    "nor",
    "not",
    "now",
    "of",
    "off",
    "on",
    "once",
    "only",
    "or",
    "other",
    "our",
    "ours",
    "ourselves",
    "out",
    "over",
    "own",
    "same",
    "she",
    "should",
    "so",
    "some",
    "such",
    "than",
    "that",
    "the",
    "their",
    "theirs",
    "them",
    "themselves",
    "then",
    "there",
    "these",
    "they",
    "this",
    "those",
    "through",
    "to",
    "too",
    "under",
    "until",
    "up",
    "very",
    "was",
    "we",
    "were",
    "what",
    "when",
    "where",
    "which",
    "while",
    "who",
    "whom",
    "why",
    "will",
    "with",
    "would",
    "you",
    "your",
    "yours",
    "yourself",
    "yourselves",
];

const URL_TRIM: &[char] = &[
    '(', ')', '[', ']', '<', '>', '"', '\'', ',', '.', ';', '!', '?',
];

/// Tokenizes one comment body.
///
/// Whitespace-separated URLs become `url_<label>` where `<label>` is the first
/// label of the registrable domain. Other text has apostrophes removed and
/// every remaining non-alphanumeric character treated as a separator. Tokens
/// are then lowercased, stemmed, and filtered against the (stemmed) stop list.
pub fn preprocess_text(body: &str, cfg: &PipelineConfig) -> Vec<String> {
    let stemmer = match cfg.stemmer {
        StemmerKind::None => None,
        StemmerKind::SnowballEnglish => Some(Stemmer::create(Algorithm::English)),
    };
    let normalize = |w: &str| -> String {
        let w = if cfg.lowercase {
            w.to_lowercase()
        } else {
            w.to_string()
        };
        match &stemmer {
            Some(s) => s.stem(&w).into_owned(),
            None => w,
        }
    };
    let english = ENGLISH_STOPWORDS
        .iter()
        .copied()
        .filter(|_| cfg.english_stopwords);
    let stop: BTreeSet<String> = cfg
        .stopwords
        .iter()
        .map(String::as_str)
        .chain(english)
        .map(normalize)
        .collect();

    let mut out = Vec::new();
    for raw in body.split_whitespace() {
        if cfg.url_to_domain_token {
            if let Some(tok) = url_token(raw.trim_matches(URL_TRIM)) {
                out.push(tok);
                continue;
            }
        }
        if cfg.strip_special_chars {
            let cleaned: String = raw
                .chars()
                .filter(|&c| c != '\'' && c != '\u{2019}')
                .map(|c| if c.is_alphanumeric() { c } else { ' ' })
                .collect();
            for w in cleaned.split_whitespace() {
                let w = normalize(w);
                if !stop.contains(&w) {
                    out.push(w);
                }
            }
        } else {
            let w = normalize(raw);
            if !stop.contains(&w) {
                out.push(w);
            }
        }
    }
    out
}

fn url_token(s: &str) -> Option<String> {
    let lower = s.to_ascii_lowercase();
    let candidate = if lower.starts_with("http://") || lower.starts_with("https://") {
        lower
    } else if lower.starts_with("www.") {
        format!("http://{lower}")
    } else {
        return None;
    };
    let parsed = url::Url::parse(&candidate).ok()?;
    let label = match parsed.host()? {
        url::Host::Domain(host) => {
            let host = host.trim_end_matches('.');
            let registrable = psl::domain(host.as_bytes())
                .map(|d| String::from_utf8_lossy(d.as_bytes()).into_owned())
                .unwrap_or_else(|| host.to_string());
            registrable.split('.').next()?.to_string()
        }
        url::Host::Ipv4(_) | url::Host::Ipv6(_) => "ip".to_string(),
    };
    let label: String = label.chars().filter(|c| c.is_alphanumeric()).collect();
    if label.is_empty() {
        None
    } else {
        Some(format!("url_{label}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn url_becomes_domain_token() {
        let cfg = PipelineConfig::default();
        assert_eq!(
            preprocess_text("Check https://youtu.be/x", &cfg),
            vec!["check", "url_youtu"]
        );
        assert_eq!(
            preprocess_text("(https://i.redd.it/abc.png) www.reddit.com/r/x", &cfg),
            vec!["url_redd", "url_reddit"]
        );
        assert_eq!(
            preprocess_text("see http://news.bbc.co.uk/a", &cfg),
            vec!["see", "url_bbc"]
        );
    }

    #[test]
    fn empty_input() {
        assert!(preprocess_text("", &PipelineConfig::default()).is_empty());
        assert!(preprocess_text("  !!! ", &PipelineConfig::default()).is_empty());
    }

    #[test]
    fn snowball_stems() {
        // Reference output of the Snowball English stemmer for these words.
        let cfg = PipelineConfig {
            stemmer: StemmerKind::SnowballEnglish,
            ..Default::default()
        };
        assert_eq!(
            preprocess_text("Running runners ran", &cfg),
            vec!["run", "runner", "ran"]
        );
    }

    #[test]
    fn special_chars_and_stopwords() {
        let cfg = PipelineConfig::english();
        assert_eq!(
            preprocess_text("This isn't the QUESTIONS, dude!!", &cfg),
            vec!["isnt", "question", "dude"]
        );
        let raw = PipelineConfig {
            strip_special_chars: false,
            lowercase: false,
            ..Default::default()
        };
        assert_eq!(preprocess_text("Hi, you!", &raw), vec!["Hi,", "you!"]);
    }
}
