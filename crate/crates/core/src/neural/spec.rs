use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    Cnn,
    Lstm,
    #[serde(rename = "bilstm")]
    BiLstm,
    #[serde(rename = "rcnn")]
    RecurrentCnn,
    #[serde(rename = "bilstm-attn")]
    BiLstmAttention,
}

impl Architecture {
    pub const ALL: [Architecture; 5] = [
        Architecture::Cnn,
        Architecture::Lstm,
        Architecture::BiLstm,
        Architecture::RecurrentCnn,
        Architecture::BiLstmAttention,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Architecture::Cnn => "cnn",
            Architecture::Lstm => "lstm",
            Architecture::BiLstm => "bilstm",
            Architecture::RecurrentCnn => "rcnn",
            Architecture::BiLstmAttention => "bilstm-attn",
        }
    }

    pub fn has_conv(self) -> bool {
        matches!(self, Architecture::Cnn | Architecture::RecurrentCnn)
    }

    pub fn has_forward_lstm(self) -> bool {
        !matches!(self, Architecture::Cnn)
    }

    pub fn has_backward_lstm(self) -> bool {
        matches!(
            self,
            Architecture::BiLstm | Architecture::RecurrentCnn | Architecture::BiLstmAttention
        )
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Architecture::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown architecture `{s}`")))
    }
}

/// Shape of a neural model. `vocab_rows` and `embedding_dim` come from the
/// embedding table the model is built against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub architecture: Architecture,
    pub vocab_rows: usize,
    pub embedding_dim: usize,
    pub hidden_dim: usize,
    pub filter_widths: Vec<usize>,
    pub filter_count: usize,
    pub dropout: f64,
    pub max_len: usize,
    /// Width of the projected document-feature branch (recurrent CNN only).
    pub doc_feature_dim: usize,
    /// Width of the raw document-feature vectors fed to that branch.
    pub doc_input_dim: usize,
    pub trainable_embedding: bool,
}

impl ModelSpec {
    /// Defaults: hidden 64, filter widths {3, 4, 5} × 32, dropout 0.5,
    /// max_len 200, document projection 128.
    pub fn new(architecture: Architecture, vocab_rows: usize, embedding_dim: usize) -> Self {
        ModelSpec {
            architecture,
            vocab_rows,
            embedding_dim,
            hidden_dim: 64,
            filter_widths: vec![3, 4, 5],
            filter_count: 32,
            dropout: 0.5,
            max_len: 200,
            doc_feature_dim: 128,
            doc_input_dim: 0,
            trainable_embedding: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::invalid(m.to_string()));
        if self.vocab_rows < 2 || self.embedding_dim == 0 || self.max_len == 0 {
            return bad("vocab_rows ≥ 2, embedding_dim ≥ 1 and max_len ≥ 1 are required");
        }
        if self.architecture.has_forward_lstm() && self.hidden_dim == 0 {
            return bad("hidden_dim must be at least 1");
        }
        if self.architecture.has_conv()
            && (self.filter_count == 0
                || self.filter_widths.is_empty()
                || self.filter_widths.contains(&0))
        {
            return bad("convolutions need at least one filter of width ≥ 1");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if self.architecture == Architecture::RecurrentCnn
            && (self.doc_feature_dim == 0 || self.doc_input_dim == 0)
        {
            return bad("the recurrent CNN needs doc_feature_dim and doc_input_dim ≥ 1");
        }
        Ok(())
    }

    pub fn conv_features(&self) -> usize {
        if self.architecture.has_conv() {
            self.filter_widths.len() * self.filter_count
        } else {
            0
        }
    }

    /// Width of the vector entering the output layer.
    pub fn feature_dim(&self) -> usize {
        let h = self.hidden_dim;
        match self.architecture {
            Architecture::Cnn => self.conv_features(),
            Architecture::Lstm => h,
            Architecture::BiLstm | Architecture::BiLstmAttention => 2 * h,
            Architecture::RecurrentCnn => self.conv_features() + 2 * h + self.doc_feature_dim,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Epochs without validation-loss improvement before stopping; 0 disables.
    pub patience: usize,
    /// Rescale the gradient when its global L2 norm exceeds this.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: Optimizer::default(),
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 20,
            seed: 42,
            patience: 3,
            clip_norm: Some(5.0),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if let Optimizer::Adam { beta1, beta2, eps } = self.optimizer {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || eps <= 0.0 {
                return Err(Error::invalid("Adam needs beta1, beta2 in [0, 1) and eps > 0"));
            }
        }
        Ok(())
    }
}
