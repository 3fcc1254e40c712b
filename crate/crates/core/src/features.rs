//! Vocabulary fitting and count / TF-IDF vectorization.
//!
//! TF-IDF follows the textbook definition with no smoothing and no row
//! normalization: the weight of term `t` in document `d` is
//!
//! ```text
//! n(t, d) / sum_k n(k, d)  *  ln(|D| / df(t))
//! ```
//!
//! where the denominator of the term frequency counts only in-vocabulary
//! occurrences, `|D|` is the number of documents the vocabulary was fitted on
//! and `df(t)` the number of those documents containing `t`.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const VOCAB_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Analyzer {
    Word,
    WordNgram { min: usize, max: usize },
    CharNgram { min: usize, max: usize },
}

impl Analyzer {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Analyzer::Word => Ok(()),
            Analyzer::WordNgram { min, max } | Analyzer::CharNgram { min, max } => {
                if min == 0 || min > max {
                    Err(Error::invalid(format!("bad n-gram range ({min}, {max})")))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Terms of one token sequence, in order, with repetition.
    pub fn terms(&self, tokens: &[String]) -> Vec<String> {
        match *self {
            Analyzer::Word => tokens.to_vec(),
            Analyzer::WordNgram { min, max } => {
                let mut out = Vec::new();
                for n in min..=max {
                    if n > tokens.len() {
                        break;
                    }
                    out.extend(tokens.windows(n).map(|w| w.join(" ")));
                }
                out
            }
            Analyzer::CharNgram { min, max } => {
                let chars: Vec<char> = tokens.join(" ").chars().collect();
                let mut out = Vec::new();
                for n in min..=max {
                    if n > chars.len() {
                        break;
                    }
                    out.extend(chars.windows(n).map(|w| w.iter().collect::<String>()));
                }
                out
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SparseVector {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseVector {
    /// Build from unsorted (index, value) pairs; zeros are dropped and
    /// duplicate indices summed.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, f64)>) -> Self {
        let mut map: BTreeMap<usize, f64> = BTreeMap::new();
        for (i, v) in pairs {
            *map.entry(i).or_insert(0.0) += v;
        }
        let (indices, values) = map.into_iter().filter(|(_, v)| *v != 0.0).unzip();
        SparseVector { indices, values }
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.iter().map(|(i, v)| v * dense[i]).sum()
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn to_dense(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (i, v) in self.iter() {
            out[i] = v;
        }
        out
    }

    pub fn l2_normalize(&mut self) {
        let norm = self.values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            self.values.iter_mut().for_each(|v| *v /= norm);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseMatrix {
    pub rows: Vec<SparseVector>,
    pub n_cols: usize,
}

impl SparseMatrix {
    pub fn new(rows: Vec<SparseVector>, n_cols: usize) -> Result<Self> {
        for (r, row) in rows.iter().enumerate() {
            if let Some(&last) = row.indices.last() {
                if last >= n_cols {
                    return Err(Error::invalid(format!(
                        "row {r} has column {last} but matrix has {n_cols} columns"
                    )));
                }
            }
        }
        Ok(SparseMatrix { rows, n_cols })
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn select_rows(&self, idx: &[usize]) -> SparseMatrix {
        SparseMatrix {
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            n_cols: self.n_cols,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermEntry {
    pub term: String,
    pub index: usize,
    pub df: usize,
}

/// Fitted term index space.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    term_to_index: HashMap<String, usize>,
    terms: Vec<String>,
    doc_freq: Vec<usize>,
    n_docs_fitted: usize,
    analyzer: Analyzer,
    max_features: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyFile {
    format_version: u32,
    analyzer: Analyzer,
    max_features: Option<usize>,
    n_docs_fitted: usize,
    terms: Vec<TermEntry>,
}

impl Serialize for Vocabulary {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        VocabularyFile {
            format_version: VOCAB_FORMAT_VERSION,
            analyzer: self.analyzer,
            max_features: self.max_features,
            n_docs_fitted: self.n_docs_fitted,
            terms: self.entries(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Vocabulary {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let file = VocabularyFile::deserialize(d)?;
        if file.format_version != VOCAB_FORMAT_VERSION {
            return Err(D::Error::custom(format!(
                "vocabulary format version {} (expected {VOCAB_FORMAT_VERSION})",
                file.format_version
            )));
        }
        Vocabulary::from_entries(file.analyzer, file.max_features, file.n_docs_fitted, file.terms)
            .map_err(D::Error::custom)
    }
}

impl Vocabulary {
    fn from_entries(
        analyzer: Analyzer,
        max_features: Option<usize>,
        n_docs_fitted: usize,
        mut entries: Vec<TermEntry>,
    ) -> Result<Self> {
        entries.sort_by_key(|e| e.index);
        let mut term_to_index = HashMap::with_capacity(entries.len());
        let mut terms = Vec::with_capacity(entries.len());
        let mut doc_freq = Vec::with_capacity(entries.len());
        for (expect, e) in entries.into_iter().enumerate() {
            if e.index != expect {
                return Err(Error::invalid("vocabulary indices are not dense 0..V-1"));
            }
            if e.df == 0 || e.df > n_docs_fitted {
                return Err(Error::invalid(format!(
                    "term `{}` has df {} outside 1..={n_docs_fitted}",
                    e.term, e.df
                )));
            }
            if term_to_index.insert(e.term.clone(), e.index).is_some() {
                return Err(Error::invalid(format!("duplicate term `{}`", e.term)));
            }
            terms.push(e.term);
            doc_freq.push(e.df);
        }
        Ok(Vocabulary {
            term_to_index,
            terms,
            doc_freq,
            n_docs_fitted,
            analyzer,
            max_features,
        })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.term_to_index.get(term).copied()
    }

    pub fn term(&self, index: usize) -> &str {
        &self.terms[index]
    }

    pub fn doc_freq(&self, index: usize) -> usize {
        self.doc_freq[index]
    }

    pub fn n_docs_fitted(&self) -> usize {
        self.n_docs_fitted
    }

    pub fn analyzer(&self) -> Analyzer {
        self.analyzer
    }

    pub fn entries(&self) -> Vec<TermEntry> {
        self.terms
            .iter()
            .zip(&self.doc_freq)
            .enumerate()
            .map(|(index, (term, &df))| TermEntry {
                term: term.clone(),
                index,
                df,
            })
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::parse("vocabulary", e))?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&s).map_err(|e| Error::parse(path.display().to_string(), e))
    }

    fn counts(&self, tokens: &[String]) -> BTreeMap<usize, usize> {
        let mut counts = BTreeMap::new();
        for term in self.analyzer.terms(tokens) {
            if let Some(i) = self.index_of(&term) {
                *counts.entry(i).or_insert(0) += 1;
            }
        }
        counts
    }
}

/// Fit a vocabulary. With a cap, the `max_features` most frequent terms are
/// kept (ties broken lexicographically); retained terms are indexed in
/// lexicographic order.
pub fn fit_vocabulary(
    docs: &[Vec<String>],
    analyzer: Analyzer,
    max_features: Option<usize>,
) -> Result<Vocabulary> {
    if docs.is_empty() {
        return Err(Error::invalid("cannot fit a vocabulary on zero documents"));
    }
    if max_features == Some(0) {
        return Err(Error::invalid("max_features must be at least 1"));
    }
    analyzer.validate()?;

    let mut freq: HashMap<String, (usize, usize)> = HashMap::new();
    for doc in docs {
        let mut seen: HashMap<&str, ()> = HashMap::new();
        let terms = analyzer.terms(doc);
        for t in &terms {
            let e = freq.entry(t.clone()).or_insert((0, 0));
            e.0 += 1;
            if seen.insert(t.as_str(), ()).is_none() {
                e.1 += 1;
            }
        }
    }

    let mut ranked: Vec<(String, usize, usize)> =
        freq.into_iter().map(|(t, (tf, df))| (t, tf, df)).collect();
    if let Some(cap) = max_features {
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(cap);
    }
    ranked.sort_by(|a, b| a.0.cmp(&b.0));

    let entries = ranked
        .into_iter()
        .enumerate()
        .map(|(index, (term, _, df))| TermEntry { term, index, df })
        .collect();
    Vocabulary::from_entries(analyzer, max_features, docs.len(), entries)
}

/// Raw occurrence counts; out-of-vocabulary terms are ignored.
pub fn transform_count(docs: &[Vec<String>], vocab: &Vocabulary) -> SparseMatrix {
    let rows = docs
        .iter()
        .map(|d| SparseVector::from_pairs(vocab.counts(d).into_iter().map(|(i, c)| (i, c as f64))))
        .collect();
    SparseMatrix {
        rows,
        n_cols: vocab.len(),
    }
}

/// TF-IDF weights using the fit-time document frequencies.
pub fn transform_tfidf(docs: &[Vec<String>], vocab: &Vocabulary) -> SparseMatrix {
    let n_docs = vocab.n_docs_fitted as f64;
    let rows = docs
        .iter()
        .map(|d| {
            let counts = vocab.counts(d);
            let total: usize = counts.values().sum();
            SparseVector::from_pairs(counts.into_iter().map(|(i, c)| {
                let tf = c as f64 / total as f64;
                let idf = (n_docs / vocab.doc_freq[i] as f64).ln();
                (i, tf * idf)
            }))
        })
        .collect();
    SparseMatrix {
        rows,
        n_cols: vocab.len(),
    }
}

/// Row-wise L2 normalization (off by default).
pub fn l2_normalize_rows(m: &mut SparseMatrix) {
    m.rows.iter_mut().for_each(SparseVector::l2_normalize);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn docs(v: &[&[&str]]) -> Vec<Vec<String>> {
        v.iter()
            .map(|d| d.iter().map(|s| s.to_string()).collect())
            .collect()
    }

    #[test]
    fn word_vocabulary() {
        let d = docs(&[&["a", "b"], &["b", "c"]]);
        let v = fit_vocabulary(&d, Analyzer::Word, None).unwrap();
        assert_eq!(v.len(), 3);
        assert_eq!(v.n_docs_fitted(), 2);
        let df: Vec<(String, usize)> = v.entries().into_iter().map(|e| (e.term, e.df)).collect();
        assert_eq!(
            df,
            vec![("a".into(), 1), ("b".into(), 2), ("c".into(), 1)]
        );
    }

    #[test]
    fn bigrams_and_char_ngrams() {
        let v = fit_vocabulary(&docs(&[&["a", "b", "c"]]), Analyzer::WordNgram { min: 2, max: 2 }, None)
            .unwrap();
        let terms: Vec<String> = v.entries().into_iter().map(|e| e.term).collect();
        assert_eq!(terms, vec!["a b", "b c"]);

        let v = fit_vocabulary(&docs(&[&["ab"]]), Analyzer::CharNgram { min: 2, max: 2 }, None)
            .unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v.term(0), "ab");
    }

    #[test]
    fn char_ngrams_span_the_joining_space() {
        let terms = Analyzer::CharNgram { min: 3, max: 3 }.terms(&["ab".into(), "c".into()]);
        assert_eq!(terms, vec!["ab ", "b c"]);
    }

    #[test]
    fn fit_errors() {
        assert!(fit_vocabulary(&[], Analyzer::Word, None).is_err());
        assert!(fit_vocabulary(&docs(&[&["a"]]), Analyzer::Word, Some(0)).is_err());
        assert!(fit_vocabulary(&docs(&[&["a"]]), Analyzer::WordNgram { min: 3, max: 2 }, None).is_err());
    }

    #[test]
    fn max_features_keeps_most_frequent_then_lexicographic() {
        let d = docs(&[&["z", "z", "y", "x", "w"]]);
        let v = fit_vocabulary(&d, Analyzer::Word, Some(2)).unwrap();
        let terms: Vec<String> = v.entries().into_iter().map(|e| e.term).collect();
        assert_eq!(terms, vec!["w", "z"]);
    }

    #[test]
    fn counts() {
        let v = fit_vocabulary(&docs(&[&["a", "b"]]), Analyzer::Word, None).unwrap();
        let m = transform_count(&docs(&[&["b", "b", "a"], &["z"]]), &v);
        assert_eq!(m.rows[0].indices, vec![0, 1]);
        assert_eq!(m.rows[0].values, vec![1.0, 2.0]);
        assert!(m.rows[1].is_empty());

        let d = docs(&[&["a", "b"], &["b", "c"]]);
        let v = fit_vocabulary(&d, Analyzer::Word, None).unwrap();
        let m = transform_count(&d, &v);
        assert_eq!(m.n_cols, 3);
        assert!(m.rows.iter().all(|r| r.sum() == 2.0));
    }

    #[test]
    fn tfidf_hand_values() {
        let v = fit_vocabulary(&docs(&[&["a", "b"], &["a", "c"]]), Analyzer::Word, None).unwrap();
        let m = transform_tfidf(&docs(&[&["a", "b"], &[]]), &v);
        // weight(a) = 0.5 * ln(2/2) = 0 is not stored
        assert_eq!(m.rows[0].indices, vec![v.index_of("b").unwrap()]);
        assert!((m.rows[0].values[0] - 0.5 * 2f64.ln()).abs() < 1e-15);
        assert!((m.rows[0].values[0] - 0.3466).abs() < 1e-4);
        assert!(m.rows[1].is_empty());
    }

    #[test]
    fn vocabulary_json_roundtrip() {
        let d = docs(&[&["a", "b"], &["b", "c"]]);
        let v = fit_vocabulary(&d, Analyzer::WordNgram { min: 1, max: 2 }, Some(10)).unwrap();
        let json = serde_json::to_string(&v).unwrap();
        assert!(json.contains("\"n_docs_fitted\":2"));
        let back: Vocabulary = serde_json::from_str(&json).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn sparse_matrix_rejects_out_of_range() {
        let row = SparseVector::from_pairs([(3, 1.0)]);
        assert!(SparseMatrix::new(vec![row], 3).is_err());
    }
}
