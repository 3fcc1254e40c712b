//! End-to-end training, saved model files and prediction.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{FeatureSpec, ModelKind, RunConfig, SplitSection, Weighting};
use crate::corpus::{self, CorpusSplit, Document, Label, Polarity};
use crate::embeddings::{self, EmbeddingTable, EncodedBatch};
use crate::error::{Error, Result};
use crate::features::{self, SparseMatrix, Vocabulary};
use crate::linear::{self, LinearModel, MnbModel};
use crate::metrics::EvalReport;
use crate::neural::{self, Architecture, History, ModelSpec, Params};
use crate::textprep::{self, PipelineConfig};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Rows per forward pass at prediction time.
const PREDICT_CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuralCheckpoint {
    pub spec: ModelSpec,
    pub embedding_path: PathBuf,
    /// Rows of the embedding table after the padding and OOV rows, in order.
    pub embedding_tokens: Vec<String>,
    pub vocab_hash: String,
    pub params: Params,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelParams {
    Mnb(MnbModel),
    Linear(LinearModel),
    Neural(Box<NeuralCheckpoint>),
}

/// Everything needed to turn raw text into a prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedModel {
    pub format_version: u32,
    pub model_type: ModelKind,
    pub corpus_polarity: Option<Polarity>,
    pub split: SplitSection,
    pub pipeline: PipelineConfig,
    pub features: FeatureSpec,
    /// Term index for linear models and the recurrent CNN's document branch.
    pub vocabulary: Option<Vocabulary>,
    pub params: ModelParams,
}

impl SavedModel {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::parse("model", e))
    }

    pub fn from_json(s: &str, origin: &str) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_str(s).map_err(|e| Error::parse(origin, e))?;
        let found = v
            .get("format_version")
            .and_then(|x| x.as_u64())
            .ok_or_else(|| Error::Parse {
                what: origin.to_string(),
                reason: "missing format_version".into(),
            })?;
        if found != u64::from(MODEL_FORMAT_VERSION) {
            return Err(Error::VersionMismatch {
                expected: MODEL_FORMAT_VERSION,
                found: u32::try_from(found).unwrap_or(u32::MAX),
            });
        }
        serde_json::from_value(v).map_err(|e| Error::parse(origin, e))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s, &path.display().to_string())
    }

    /// Feature label used in reports.
    pub fn feature_name(&self) -> String {
        match &self.params {
            ModelParams::Neural(c) => {
                let emb = format!("embeddings-{}d", c.spec.embedding_dim);
                if c.spec.architecture == Architecture::RecurrentCnn {
                    format!("{emb}+{}", self.features.name())
                } else {
                    emb
                }
            }
            _ => self.features.name(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    #[serde(serialize_with = "label_name")]
    pub label: Label,
    /// Log-odds for naive Bayes, decision value for linear models,
    /// probability of the deceptive class for neural models.
    pub score: f64,
    /// Non-zero features (linear) or tokens fed to the network (neural).
    pub n_features: usize,
    /// Per-token attention weights for attention models.
    pub attention: Option<Vec<(String, f64)>>,
}

fn label_name<S: serde::Serializer>(l: &Label, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_str(l)
}

fn tokenize(texts: &[&str], cfg: &PipelineConfig) -> Vec<Vec<String>> {
    texts.par_iter().map(|t| textprep::preprocess(t, cfg)).collect()
}

fn doc_texts(docs: &[Document]) -> Vec<&str> {
    docs.iter().map(|d| d.text.as_str()).collect()
}

fn labels(docs: &[Document]) -> Vec<u8> {
    docs.iter().map(|d| d.label.as_u8()).collect()
}

pub fn vectorize(tokens: &[Vec<String>], spec: &FeatureSpec, vocab: &Vocabulary) -> SparseMatrix {
    let mut m = match spec.weighting {
        Weighting::Count => features::transform_count(tokens, vocab),
        Weighting::Tfidf => features::transform_tfidf(tokens, vocab),
    };
    if spec.l2_normalize {
        features::l2_normalize_rows(&mut m);
    }
    m
}

/// A saved model plus whatever it needs at prediction time.
pub struct Predictor {
    model: SavedModel,
    table: Option<EmbeddingTable>,
}

impl Predictor {
    /// Neural models reload their embedding rows from the recorded file.
    pub fn new(model: SavedModel) -> Result<Self> {
        let table = match &model.params {
            ModelParams::Neural(c) => {
                let wanted: HashSet<String> = c.embedding_tokens.iter().cloned().collect();
                let table = embeddings::load_embeddings(
                    &c.embedding_path,
                    Some(c.spec.embedding_dim),
                    Some(&wanted),
                )?;
                Some(table)
            }
            _ => None,
        };
        Self::with_table(model, table)
    }

    pub fn with_table(model: SavedModel, table: Option<EmbeddingTable>) -> Result<Self> {
        if let ModelParams::Neural(c) = &model.params {
            let t = table
                .as_ref()
                .ok_or_else(|| Error::invalid("neural model needs its embedding table"))?;
            if t.tokens() != c.embedding_tokens.as_slice() || t.vocab_hash() != c.vocab_hash {
                return Err(Error::invalid(format!(
                    "embedding file {} no longer matches the model (vocab hash {} vs {})",
                    c.embedding_path.display(),
                    t.vocab_hash(),
                    c.vocab_hash
                )));
            }
            neural::model::check_params(&c.spec, &c.params)?;
        }
        Ok(Predictor { model, table })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::new(SavedModel::load(path)?)
    }

    pub fn model(&self) -> &SavedModel {
        &self.model
    }

    pub fn predict(&self, texts: &[&str]) -> Result<Vec<Prediction>> {
        let tokens = tokenize(texts, &self.model.pipeline);
        match &self.model.params {
            ModelParams::Mnb(m) => {
                let x = self.linear_features(&tokens)?;
                let (labels, scores) = m.predict(&x)?;
                Ok(linear_predictions(&x, labels, scores))
            }
            ModelParams::Linear(m) => {
                let x = self.linear_features(&tokens)?;
                let (labels, scores) = m.predict(&x)?;
                Ok(linear_predictions(&x, labels, scores))
            }
            ModelParams::Neural(c) => self.predict_neural(c, &tokens),
        }
    }

    fn linear_features(&self, tokens: &[Vec<String>]) -> Result<SparseMatrix> {
        let vocab = self
            .model
            .vocabulary
            .as_ref()
            .ok_or_else(|| Error::invalid("linear model file has no vocabulary"))?;
        Ok(vectorize(tokens, &self.model.features, vocab))
    }

    fn predict_neural(&self, c: &NeuralCheckpoint, tokens: &[Vec<String>]) -> Result<Vec<Prediction>> {
        let table = self.table.as_ref().expect("checked in with_table");
        let spec = &c.spec;
        let mut out = Vec::with_capacity(tokens.len());
        for chunk in tokens.chunks(PREDICT_CHUNK) {
            let batch = encode(spec, table, chunk, &vec![0; chunk.len()])?;
            let batch = match spec.architecture {
                Architecture::RecurrentCnn => {
                    let vocab = self.model.vocabulary.as_ref().ok_or_else(|| {
                        Error::invalid("recurrent CNN model file has no vocabulary")
                    })?;
                    batch.with_doc_features(vectorize(chunk, &self.model.features, vocab))?
                }
                _ => batch,
            };
            let probs = neural::predict_proba(spec, &c.params, table, &batch)?;
            let attention = if spec.architecture == Architecture::BiLstmAttention {
                Some(neural::attention_weights(spec, &c.params, table, &batch)?)
            } else {
                None
            };
            for (i, &p) in probs.iter().enumerate() {
                let len = batch.lengths[i];
                let attn = attention.as_ref().map(|a| {
                    let row = &a.data[i * batch.max_len..i * batch.max_len + len];
                    chunk[i][..len].iter().cloned().zip(row.iter().copied()).collect()
                });
                out.push(Prediction {
                    label: if p > 0.5 { Label::Deceptive } else { Label::Truthful },
                    score: p,
                    n_features: len,
                    attention: attn,
                });
            }
        }
        Ok(out)
    }

    /// Score labelled documents.
    pub fn evaluate(&self, docs: &[Document]) -> Result<EvalReport> {
        let preds = self.predict(&doc_texts(docs))?;
        let y_pred: Vec<u8> = preds.iter().map(|p| p.label.as_u8()).collect();
        let scores: Vec<f64> = preds.iter().map(|p| p.score).collect();
        EvalReport::new(
            self.model.model_type.name(),
            self.model.feature_name(),
            self.model.split.seed,
            &labels(docs),
            &y_pred,
            &scores,
        )
    }
}

fn linear_predictions(x: &SparseMatrix, labels: Vec<u8>, scores: Vec<f64>) -> Vec<Prediction> {
    labels
        .into_iter()
        .zip(scores)
        .zip(&x.rows)
        .map(|((l, s), row)| Prediction {
            label: Label::from_u8(l).expect("binary label"),
            score: s,
            n_features: row.nnz(),
            attention: None,
        })
        .collect()
}

fn encode(
    spec: &ModelSpec,
    table: &EmbeddingTable,
    tokens: &[Vec<String>],
    labels: &[u8],
) -> Result<EncodedBatch> {
    embeddings::encode_batch(tokens, labels, table, spec.max_len)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: SavedModel,
    pub report: EvalReport,
    /// Accuracy on the training split, evaluation mode.
    pub train_accuracy: f64,
    pub history: Option<History>,
}

/// Load the configured corpus and apply the polarity filter.
pub fn load_documents(cfg: &RunConfig) -> Result<Vec<Document>> {
    let docs = corpus::load_corpus(cfg.corpus_root()?)?;
    Ok(corpus::filter_polarity(docs, cfg.corpus.polarity))
}

/// Split, fit on the training part, score the held-out part.
pub fn train_and_evaluate(cfg: &RunConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let docs = load_documents(cfg)?;
    let split = corpus::split(&docs, cfg.split.train_fraction, cfg.split.seed)?;
    train_on_split(cfg, &split)
}

pub fn train_on_split(cfg: &RunConfig, split: &CorpusSplit) -> Result<TrainOutcome> {
    match cfg.model.kind {
        ModelKind::Neural(arch) => train_neural(cfg, arch, split),
        kind => train_linear(cfg, kind, split),
    }
}

fn train_linear(cfg: &RunConfig, kind: ModelKind, split: &CorpusSplit) -> Result<TrainOutcome> {
    let pipeline = cfg.preprocess.pipeline(false)?;
    let train_tokens = tokenize(&doc_texts(&split.train), &pipeline);
    let vocab = features::fit_vocabulary(
        &train_tokens,
        cfg.features.analyzer(),
        cfg.features.max_features(),
    )?;
    let x = vectorize(&train_tokens, &cfg.features, &vocab);
    let y = labels(&split.train);
    let params = match kind.loss() {
        None => ModelParams::Mnb(linear::mnb_fit(&x, &y, cfg.model.alpha)?),
        Some(loss) => ModelParams::Linear(linear::sgd_fit(&x, &y, loss, &cfg.sgd)?),
    };
    let model = SavedModel {
        format_version: MODEL_FORMAT_VERSION,
        model_type: kind,
        corpus_polarity: cfg.corpus.polarity,
        split: cfg.split.clone(),
        pipeline,
        features: cfg.features.clone(),
        vocabulary: Some(vocab),
        params,
    };
    finish(Predictor::with_table(model, None)?, split, None)
}

fn finish(predictor: Predictor, split: &CorpusSplit, history: Option<History>) -> Result<TrainOutcome> {
    let report = predictor.evaluate(&split.test)?;
    let train_accuracy = predictor.evaluate(&split.train)?.accuracy;
    Ok(TrainOutcome {
        model: predictor.model,
        report,
        train_accuracy,
        history,
    })
}

fn train_neural(cfg: &RunConfig, arch: Architecture, split: &CorpusSplit) -> Result<TrainOutcome> {
    let pipeline = cfg.preprocess.pipeline(true)?;
    let emb_path = cfg
        .embeddings
        .path
        .as_ref()
        .ok_or_else(|| Error::invalid("neural models need an embedding file"))?;
    let emb_path = emb_path.canonicalize().map_err(|e| Error::io(emb_path, e))?;

    let train_tokens = tokenize(&doc_texts(&split.train), &pipeline);
    let test_tokens = tokenize(&doc_texts(&split.test), &pipeline);
    let wanted: HashSet<String> = train_tokens
        .iter()
        .chain(&test_tokens)
        .flatten()
        .cloned()
        .collect();
    let table = embeddings::load_embeddings(&emb_path, cfg.embeddings.dim, Some(&wanted))?;
    let mut spec = cfg.neural.spec(arch, table.n_rows(), table.dim());

    let vocab = if arch == Architecture::RecurrentCnn {
        let v = features::fit_vocabulary(
            &train_tokens,
            cfg.features.analyzer(),
            cfg.features.max_features(),
        )?;
        spec.doc_input_dim = v.len();
        Some(v)
    } else {
        None
    };
    spec.validate()?;

    let batch_for = |docs: &[Document]| -> Result<EncodedBatch> {
        let toks = tokenize(&doc_texts(docs), &pipeline);
        let b = encode(&spec, &table, &toks, &labels(docs))?;
        match &vocab {
            Some(v) => b.with_doc_features(vectorize(&toks, &cfg.features, v)),
            None => Ok(b),
        }
    };
    let (fit_docs, val_docs) = if cfg.neural.validation_fraction > 0.0 {
        let s = corpus::split(
            &split.train,
            1.0 - cfg.neural.validation_fraction,
            cfg.split.seed,
        )?;
        (s.train, Some(s.test))
    } else {
        (split.train.clone(), None)
    };
    let fit = batch_for(&fit_docs)?;
    let val = val_docs.as_deref().map(batch_for).transpose()?;

    let init = neural::init_params(&spec, &table, cfg.train.seed)?;
    let (params, history) = neural::train(&spec, &cfg.train, &table, init, &fit, val.as_ref())?;

    let checkpoint = NeuralCheckpoint {
        spec,
        embedding_path: emb_path,
        embedding_tokens: table.tokens().to_vec(),
        vocab_hash: table.vocab_hash(),
        params,
    };
    let model = SavedModel {
        format_version: MODEL_FORMAT_VERSION,
        model_type: ModelKind::Neural(arch),
        corpus_polarity: cfg.corpus.polarity,
        split: cfg.split.clone(),
        pipeline,
        features: cfg.features.clone(),
        vocabulary: vocab,
        params: ModelParams::Neural(Box::new(checkpoint)),
    };
    finish(Predictor::with_table(model, Some(table))?, split, Some(history))
}

/// Files written by [`write_outputs`].
#[derive(Debug, Clone)]
pub struct OutputPaths {
    pub model: PathBuf,
    pub report: PathBuf,
    pub history: Option<PathBuf>,
}

/// Write `model.json`, `report.json` and, for neural runs, `history.csv`.
pub fn write_outputs(out: &TrainOutcome, dir: &Path) -> Result<OutputPaths> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let model = dir.join("model.json");
    out.model.save(&model)?;
    let report = dir.join("report.json");
    let json = serde_json::to_string_pretty(&out.report).map_err(|e| Error::parse("report", e))?;
    std::fs::write(&report, json + "\n").map_err(|e| Error::io(&report, e))?;
    let history = match &out.history {
        Some(h) => {
            let p = dir.join("history.csv");
            std::fs::write(&p, h.to_csv()).map_err(|e| Error::io(&p, e))?;
            Some(p)
        }
        None => None,
    };
    Ok(OutputPaths {
        model,
        report,
        history,
    })
}
