//! Run configuration: one TOML file with a section per module.
//!
//! ```toml
//! [corpus]
//! root = "op_spam_v1.4"
//!
//! [split]
//! train_fraction = 0.8
//! seed = 42
//!
//! [features]
//! weighting = "tfidf"
//! analyzer = "word"
//!
//! [model]
//! kind = "mnb"
//! ```
//!
//! Every omitted key takes the default of the module that owns it.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::Polarity;
use crate::error::{Error, Result};
use crate::features::Analyzer;
use crate::linear::{Loss, SgdConfig};
use crate::neural::{Architecture, ModelSpec, TrainConfig};
use crate::textprep::{self, PipelineConfig};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    pub root: Option<PathBuf>,
    pub polarity: Option<Polarity>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection {
            train_fraction: 0.8,
            seed: 42,
        }
    }
}

/// Preprocessing switches. `remove_stopwords` and `stem` default to on for
/// linear models and off for neural ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessSection {
    pub lowercase: bool,
    pub strip_punct: bool,
    pub strip_numeric: bool,
    pub remove_stopwords: Option<bool>,
    pub stem: Option<bool>,
    pub stopword_file: Option<PathBuf>,
}

impl Default for PreprocessSection {
    fn default() -> Self {
        PreprocessSection {
            lowercase: true,
            strip_punct: true,
            strip_numeric: true,
            remove_stopwords: None,
            stem: None,
            stopword_file: None,
        }
    }
}

impl PreprocessSection {
    pub fn pipeline(&self, neural: bool) -> Result<PipelineConfig> {
        let base = if neural {
            PipelineConfig::neural()
        } else {
            PipelineConfig::default()
        };
        let stopword_list = match &self.stopword_file {
            Some(p) => textprep::load_stopwords(p)?,
            None => base.stopword_list,
        };
        let cfg = PipelineConfig {
            lowercase: self.lowercase,
            strip_punct: self.strip_punct,
            strip_numeric: self.strip_numeric,
            remove_stopwords: self.remove_stopwords.unwrap_or(base.remove_stopwords),
            stem: self.stem.unwrap_or(base.stem),
            stopword_list,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    Count,
    Tfidf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnalyzerKind {
    Word,
    Ngram,
    Char,
}

/// Vectorizer choice. Short names such as `tfidf-word`, `count-ngram` or
/// `tfidf-char` parse into this.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureSpec {
    pub weighting: Weighting,
    pub analyzer: AnalyzerKind,
    pub word_ngram: [usize; 2],
    pub char_ngram: [usize; 2],
    /// `None` means uncapped for words and 10000 for n-gram analyzers.
    pub max_features: Option<usize>,
    pub l2_normalize: bool,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        FeatureSpec {
            weighting: Weighting::Tfidf,
            analyzer: AnalyzerKind::Word,
            word_ngram: [2, 3],
            char_ngram: [2, 5],
            max_features: None,
            l2_normalize: false,
        }
    }
}

pub const NGRAM_MAX_FEATURES: usize = 10_000;

impl FeatureSpec {
    pub fn analyzer(&self) -> Analyzer {
        match self.analyzer {
            AnalyzerKind::Word => Analyzer::Word,
            AnalyzerKind::Ngram => Analyzer::WordNgram {
                min: self.word_ngram[0],
                max: self.word_ngram[1],
            },
            AnalyzerKind::Char => Analyzer::CharNgram {
                min: self.char_ngram[0],
                max: self.char_ngram[1],
            },
        }
    }

    pub fn max_features(&self) -> Option<usize> {
        match (self.max_features, self.analyzer) {
            (Some(n), _) => Some(n),
            (None, AnalyzerKind::Word) => None,
            (None, _) => Some(NGRAM_MAX_FEATURES),
        }
    }

    pub fn name(&self) -> String {
        let w = match self.weighting {
            Weighting::Count => "count",
            Weighting::Tfidf => "tfidf",
        };
        let a = match self.analyzer {
            AnalyzerKind::Word => "word",
            AnalyzerKind::Ngram => "ngram",
            AnalyzerKind::Char => "char",
        };
        format!("{w}-{a}")
    }
}

impl FromStr for FeatureSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (w, a) = s
            .split_once('-')
            .ok_or_else(|| Error::invalid(format!("feature set `{s}` is not <weighting>-<analyzer>")))?;
        let weighting = match w {
            "count" => Weighting::Count,
            "tfidf" => Weighting::Tfidf,
            _ => return Err(Error::invalid(format!("unknown weighting `{w}`"))),
        };
        let analyzer = match a {
            "word" => AnalyzerKind::Word,
            "ngram" => AnalyzerKind::Ngram,
            "char" => AnalyzerKind::Char,
            _ => return Err(Error::invalid(format!("unknown analyzer `{a}`"))),
        };
        Ok(FeatureSpec {
            weighting,
            analyzer,
            ..FeatureSpec::default()
        })
    }
}

/// Which classifier to train.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Mnb,
    /// Logistic loss, SGD-trained.
    Logreg,
    /// Logistic loss under the `[sgd]` schedule of the SGD preset.
    Sgd,
    /// Hinge loss (primal linear SVM).
    Svm,
    Neural(Architecture),
}

impl ModelKind {
    pub const LINEAR_NAMES: [&'static str; 4] = ["mnb", "logreg", "sgd", "svm"];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Mnb => "mnb",
            ModelKind::Logreg => "logreg",
            ModelKind::Sgd => "sgd",
            ModelKind::Svm => "svm",
            ModelKind::Neural(a) => a.name(),
        }
    }

    pub fn is_neural(self) -> bool {
        matches!(self, ModelKind::Neural(_))
    }

    pub fn loss(self) -> Option<Loss> {
        match self {
            ModelKind::Logreg | ModelKind::Sgd => Some(Loss::Logistic),
            ModelKind::Svm => Some(Loss::Hinge),
            _ => None,
        }
    }

    pub fn all_names() -> Vec<&'static str> {
        let mut v = Self::LINEAR_NAMES.to_vec();
        v.extend(Architecture::ALL.iter().map(|a| a.name()));
        v
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "mnb" => ModelKind::Mnb,
            "logreg" => ModelKind::Logreg,
            "sgd" => ModelKind::Sgd,
            "svm" => ModelKind::Svm,
            other => ModelKind::Neural(other.parse().map_err(|_| {
                Error::invalid(format!(
                    "unknown model `{other}` (expected one of {})",
                    ModelKind::all_names().join(", ")
                ))
            })?),
        })
    }
}

impl Serialize for ModelKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for ModelKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelKind,
    /// Naive Bayes smoothing.
    pub alpha: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            kind: ModelKind::Mnb,
            alpha: 1.0,
        }
    }
}

/// Neural layer sizes; defaults follow [`ModelSpec::new`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NeuralSection {
    pub hidden_dim: usize,
    pub filter_widths: Vec<usize>,
    pub filter_count: usize,
    pub dropout: f64,
    pub max_len: usize,
    pub doc_feature_dim: usize,
    pub trainable_embedding: bool,
    /// Share of the training split held out for early stopping (0 disables).
    pub validation_fraction: f64,
}

impl Default for NeuralSection {
    fn default() -> Self {
        let s = ModelSpec::new(Architecture::Cnn, 2, 1);
        NeuralSection {
            hidden_dim: s.hidden_dim,
            filter_widths: s.filter_widths,
            filter_count: s.filter_count,
            dropout: s.dropout,
            max_len: s.max_len,
            doc_feature_dim: s.doc_feature_dim,
            trainable_embedding: s.trainable_embedding,
            validation_fraction: 0.1,
        }
    }
}

impl NeuralSection {
    pub fn spec(&self, architecture: Architecture, vocab_rows: usize, dim: usize) -> ModelSpec {
        ModelSpec {
            hidden_dim: self.hidden_dim,
            filter_widths: self.filter_widths.clone(),
            filter_count: self.filter_count,
            dropout: self.dropout,
            max_len: self.max_len,
            doc_feature_dim: self.doc_feature_dim,
            trainable_embedding: self.trainable_embedding,
            ..ModelSpec::new(architecture, vocab_rows, dim)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingSection {
    pub path: Option<PathBuf>,
    pub dim: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("runs"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: CorpusSection,
    pub split: SplitSection,
    pub preprocess: PreprocessSection,
    pub features: FeatureSpec,
    pub model: ModelSection,
    pub sgd: SgdConfig,
    pub neural: NeuralSection,
    pub train: TrainConfig,
    pub embeddings: EmbeddingSection,
    pub output: OutputSection,
}

impl RunConfig {
    pub fn from_toml(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::parse("config", e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&s).map_err(|e| Error::parse(path.display().to_string(), e))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::parse("config", e))
    }

    /// Deep-merge a TOML table of overrides over this config.
    pub fn merged(&self, overrides: &toml::Table) -> Result<Self> {
        let mut base = toml::Table::try_from(self).map_err(|e| Error::parse("config", e))?;
        merge(&mut base, overrides);
        base.try_into().map_err(|e| Error::parse("config overrides", e))
    }

    pub fn corpus_root(&self) -> Result<&Path> {
        self.corpus
            .root
            .as_deref()
            .ok_or_else(|| Error::invalid("no corpus root configured (set [corpus] root or --corpus)"))
    }

    /// Check values and that referenced paths exist.
    pub fn validate(&self) -> Result<()> {
        let root = self.corpus_root()?;
        if !root.is_dir() {
            return Err(Error::Corpus {
                path: root.to_path_buf(),
                reason: "corpus root is not a directory".into(),
            });
        }
        if !(self.split.train_fraction > 0.0 && self.split.train_fraction < 1.0) {
            return Err(Error::invalid("split.train_fraction must lie in (0, 1)"));
        }
        if let Some(p) = &self.preprocess.stopword_file {
            if !p.is_file() {
                return Err(Error::invalid(format!(
                    "stopword file {} does not exist",
                    p.display()
                )));
            }
        }
        self.features.analyzer().validate()?;
        if self.model.kind == ModelKind::Mnb && (self.model.alpha.is_nan() || self.model.alpha <= 0.0) {
            return Err(Error::invalid("model.alpha must be positive"));
        }
        if let ModelKind::Neural(_) = self.model.kind {
            let path = self.embeddings.path.as_ref().ok_or_else(|| {
                Error::invalid("neural models need an embedding file ([embeddings] path or --embeddings)")
            })?;
            if !path.is_file() {
                return Err(Error::invalid(format!(
                    "embedding file {} does not exist",
                    path.display()
                )));
            }
            if !(0.0..1.0).contains(&self.neural.validation_fraction) {
                return Err(Error::invalid("neural.validation_fraction must lie in [0, 1)"));
            }
            self.train.validate()?;
        }
        Ok(())
    }
}

/// Parse a `section.key=value` override. Values that are not valid TOML are
/// taken as bare strings, so `corpus.root=/data/ott` works unquoted.
pub fn parse_override(s: &str) -> Result<toml::Table> {
    let (key, value) = s
        .split_once('=')
        .ok_or_else(|| Error::invalid(format!("override {s:?} is not of the form key=value")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(Error::invalid(format!("override {s:?} has an empty key")));
    }
    let value = value.trim();
    toml::from_str(&format!("{key} = {value}"))
        .or_else(|_| toml::from_str(&format!("{key} = {}", toml::Value::from(value))))
        .map_err(|e| Error::parse(format!("override {s:?}"), e))
}

fn merge(base: &mut toml::Table, over: &toml::Table) {
    for (k, v) in over {
        match (base.get_mut(k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            _ => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}
