//! Text preprocessing: lowercasing, punctuation and numeric removal,
//! whitespace tokenization, stopword removal and Porter stemming.

mod porter;

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use porter::stem;

/// The stopword list shipped with the crate.
pub const DEFAULT_STOPWORDS: &str = include_str!("../../data/stopwords_en.txt");

/// Parse a stopword file: one token per line, `#` starts a comment.
///
/// Entries are normalized with the same punctuation rule the pipeline applies
/// to text, so `don't` is stored as `dont`.
pub fn parse_stopwords(contents: &str) -> BTreeSet<String> {
    contents
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(|l| strip_punctuation(&l.to_lowercase()))
        .filter(|l| !l.is_empty())
        .collect()
}

pub fn load_stopwords(path: &Path) -> Result<BTreeSet<String>> {
    let contents = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_stopwords(&contents))
}

pub fn default_stopwords() -> BTreeSet<String> {
    parse_stopwords(DEFAULT_STOPWORDS)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub lowercase: bool,
    pub strip_punct: bool,
    pub strip_numeric: bool,
    pub remove_stopwords: bool,
    pub stem: bool,
    pub stopword_list: BTreeSet<String>,
}

impl Default for PipelineConfig {
    /// Every stage on; the configuration linear models use.
    fn default() -> Self {
        PipelineConfig {
            lowercase: true,
            strip_punct: true,
            strip_numeric: true,
            remove_stopwords: true,
            stem: true,
            stopword_list: default_stopwords(),
        }
    }
}

impl PipelineConfig {
    /// Neural models keep surface forms so they line up with embedding vocabularies.
    pub fn neural() -> Self {
        PipelineConfig {
            remove_stopwords: false,
            stem: false,
            ..PipelineConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.remove_stopwords && self.stopword_list.is_empty() {
            return Err(Error::invalid(
                "stopword removal is enabled but the stopword list is empty",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub doc_id: String,
    pub tokens: Vec<String>,
}

impl TokenSequence {
    pub fn new(doc_id: impl Into<String>, tokens: Vec<String>) -> Self {
        TokenSequence {
            doc_id: doc_id.into(),
            tokens,
        }
    }
}

fn strip_punctuation(s: &str) -> String {
    s.chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect()
}

/// Run the pipeline over one text.
///
/// Stages, in order: lowercase, punctuation removal, whitespace tokenization
/// with numeric-token removal, stopword removal, stemming. Each stage is
/// skipped when its flag is off. The result may be empty.
pub fn preprocess(text: &str, cfg: &PipelineConfig) -> Vec<String> {
    let mut s = if cfg.lowercase {
        text.to_lowercase()
    } else {
        text.to_string()
    };
    if cfg.strip_punct {
        s = strip_punctuation(&s);
    }
    s.split_whitespace()
        .filter(|t| !(cfg.strip_numeric && t.chars().any(char::is_numeric)))
        .filter(|t| !(cfg.remove_stopwords && cfg.stopword_list.contains(*t)))
        .map(|t| if cfg.stem { stem(t) } else { t.to_string() })
        .collect()
}

pub fn preprocess_doc(doc_id: &str, text: &str, cfg: &PipelineConfig) -> TokenSequence {
    TokenSequence::new(doc_id, preprocess(text, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_traced_sentence() {
        let cfg = PipelineConfig::default();
        assert_eq!(preprocess("The room was GREAT!!", &cfg), vec!["room", "great"]);
    }

    #[test]
    fn empty_input() {
        assert!(preprocess("", &PipelineConfig::default()).is_empty());
    }

    #[test]
    fn stemming_without_stopwords() {
        let cfg = PipelineConfig {
            remove_stopwords: false,
            ..PipelineConfig::default()
        };
        assert_eq!(
            preprocess("running runs runner", &cfg),
            vec!["run", "run", "runner"]
        );
    }

    #[test]
    fn apostrophes_and_digits() {
        let cfg = PipelineConfig::neural();
        assert_eq!(
            preprocess("Don't pay $200 for 2nd-rate rooms.", &cfg),
            vec!["dont", "pay", "for", "rooms"]
        );
    }

    #[test]
    fn stopword_file_normalization() {
        let sw = parse_stopwords("# comment\nDon't\n\nthe # trailing\n");
        assert!(sw.contains("dont"));
        assert!(sw.contains("the"));
        assert_eq!(sw.len(), 2);
    }

    #[test]
    fn shipped_stopwords_size() {
        let n = default_stopwords().len();
        assert!((150..=200).contains(&n), "{n}");
    }

    #[test]
    fn empty_stoplist_is_invalid() {
        let cfg = PipelineConfig {
            stopword_list: BTreeSet::new(),
            ..PipelineConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    fn sorted(mut v: Vec<String>) -> Vec<String> {
        v.sort();
        v
    }

    proptest! {
        #[test]
        fn tokens_are_clean(text in "[ -~éÀß\\t\\n]{0,80}") {
            let cfg = PipelineConfig::default();
            for t in preprocess(&text, &cfg) {
                prop_assert!(!t.is_empty());
                prop_assert!(t.chars().all(char::is_alphanumeric));
                prop_assert!(!t.chars().any(char::is_numeric));
                prop_assert_eq!(t.to_lowercase(), t.clone());
            }
        }

        #[test]
        fn idempotent_without_stemming(text in "[ -~éÀß\\t\\n]{0,80}") {
            let cfg = PipelineConfig { stem: false, ..PipelineConfig::default() };
            let once = preprocess(&text, &cfg);
            let twice = preprocess(&once.join(" "), &cfg);
            prop_assert_eq!(sorted(once), sorted(twice));
        }

        #[test]
        fn no_stopwords_survive(words in proptest::collection::vec("(the|is|they|this|room|great|Are|don't)", 0..20)) {
            let cfg = PipelineConfig { stem: false, ..PipelineConfig::default() };
            for t in preprocess(&words.join(" "), &cfg) {
                prop_assert!(!cfg.stopword_list.contains(&t));
            }
        }
    }
}
