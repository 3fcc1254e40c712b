//! Multinomial naive Bayes and SGD-trained linear models.
//!
//! The linear SVM is the primal hinge-loss model, trained by the same SGD
//! routine as logistic regression.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{SparseMatrix, SparseVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MnbModel {
    pub class_log_prior: [f64; 2],
    /// `2 × V`, row per class.
    pub feature_log_prob: [Vec<f64>; 2],
    pub alpha: f64,
}

fn check_labels(x: &SparseMatrix, y: &[u8]) -> Result<()> {
    if x.n_rows() == 0 {
        return Err(Error::invalid("empty training matrix"));
    }
    if x.n_rows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.n_rows(),
            got: y.len(),
        });
    }
    if y.iter().any(|&v| v > 1) {
        return Err(Error::invalid("labels must be 0 or 1"));
    }
    if !(y.contains(&0) && y.contains(&1)) {
        return Err(Error::invalid("training data must contain both classes"));
    }
    Ok(())
}

pub fn mnb_fit(x: &SparseMatrix, y: &[u8], alpha: f64) -> Result<MnbModel> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::invalid(format!("alpha must be > 0, got {alpha}")));
    }
    check_labels(x, y)?;
    let v = x.n_cols;
    let mut counts = [vec![0.0; v], vec![0.0; v]];
    let mut n_class = [0usize; 2];
    for (row, &label) in x.rows.iter().zip(y) {
        let c = label as usize;
        n_class[c] += 1;
        for (i, val) in row.iter() {
            if val < 0.0 {
                return Err(Error::invalid("naive Bayes needs non-negative features"));
            }
            counts[c][i] += val;
        }
    }
    let n = y.len() as f64;
    let class_log_prior = [
        (n_class[0] as f64 / n).ln(),
        (n_class[1] as f64 / n).ln(),
    ];
    let feature_log_prob = counts.map(|row| {
        let total: f64 = row.iter().sum::<f64>() + alpha * v as f64;
        row.iter().map(|c| ((c + alpha) / total).ln()).collect()
    });
    Ok(MnbModel {
        class_log_prior,
        feature_log_prob,
        alpha,
    })
}

impl MnbModel {
    pub fn n_features(&self) -> usize {
        self.feature_log_prob[0].len()
    }

    /// Joint log-likelihood per class.
    pub fn log_scores(&self, row: &SparseVector) -> [f64; 2] {
        [0, 1].map(|c| self.class_log_prior[c] + row.dot(&self.feature_log_prob[c]))
    }

    /// Labels (ties go to class 0) and log-odds `score[1] - score[0]`.
    pub fn predict(&self, x: &SparseMatrix) -> Result<(Vec<u8>, Vec<f64>)> {
        if x.n_cols != self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                got: x.n_cols,
            });
        }
        Ok(x.rows
            .iter()
            .map(|r| {
                let s = self.log_scores(r);
                (u8::from(s[1] > s[0]), s[1] - s[0])
            })
            .unzip())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    Logistic,
    Hinge,
}

impl Loss {
    /// Loss for a signed label `ys ∈ {-1, +1}` and decision value `z`.
    pub fn value(self, ys: f64, z: f64) -> f64 {
        let m = ys * z;
        match self {
            // log(1 + e^{-m}) without overflow
            Loss::Logistic => {
                if m > 0.0 {
                    (-m).exp().ln_1p()
                } else {
                    -m + m.exp().ln_1p()
                }
            }
            Loss::Hinge => (1.0 - m).max(0.0),
        }
    }

    /// d loss / d z.
    pub fn dz(self, ys: f64, z: f64) -> f64 {
        let m = ys * z;
        match self {
            Loss::Logistic => -ys * sigmoid(-m),
            Loss::Hinge => {
                if m < 1.0 {
                    -ys
                } else {
                    0.0
                }
            }
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SgdConfig {
    pub learning_rate: f64,
    /// Step `t` uses `learning_rate / (1 + t * decay)`.
    pub decay: f64,
    pub epochs: usize,
    pub l2: f64,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            learning_rate: 0.1,
            decay: 1e-3,
            epochs: 50,
            l2: 1e-4,
            seed: 42,
            shuffle: true,
        }
    }
}

impl SgdConfig {
    fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) || self.decay < 0.0 {
            return Err(Error::invalid("l2 and decay must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub loss: Loss,
    pub l2: f64,
}

impl LinearModel {
    pub fn decision(&self, row: &SparseVector) -> f64 {
        row.dot(&self.weights) + self.bias
    }

    /// Label 1 iff the decision value is strictly positive.
    pub fn predict(&self, x: &SparseMatrix) -> Result<(Vec<u8>, Vec<f64>)> {
        if x.n_cols != self.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.len(),
                got: x.n_cols,
            });
        }
        Ok(x.rows
            .iter()
            .map(|r| {
                let z = self.decision(r);
                (u8::from(z > 0.0), z)
            })
            .unzip())
    }

    /// `(1/N) Σ loss + l2 ‖w‖²`.
    pub fn objective(&self, x: &SparseMatrix, y: &[u8]) -> f64 {
        let data: f64 = x
            .rows
            .iter()
            .zip(y)
            .map(|(r, &l)| self.loss.value(signed(l), self.decision(r)))
            .sum::<f64>()
            / y.len() as f64;
        data + self.l2 * self.weights.iter().map(|w| w * w).sum::<f64>()
    }
}

fn signed(label: u8) -> f64 {
    if label == 1 {
        1.0
    } else {
        -1.0
    }
}

/// Per-sample SGD on `(1/N) Σ loss(y_i, w·x_i + b) + l2 ‖w‖²`.
///
/// The L2 term is applied as an implicit (proximal) shrink
/// `w ← w / (1 + 2 η l2)` after each step, which stays stable for any `l2`.
/// Weights are stored as `scale · v` so the shrink is O(1).
pub fn sgd_fit(x: &SparseMatrix, y: &[u8], loss: Loss, cfg: &SgdConfig) -> Result<LinearModel> {
    cfg.validate()?;
    check_labels(x, y)?;
    let mut v = vec![0.0; x.n_cols];
    let mut scale = 1.0f64;
    let mut bias = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..y.len()).collect();
    let mut t = 0usize;
    for epoch in 0..cfg.epochs {
        if cfg.shuffle {
            order.shuffle(&mut rng);
        }
        for &i in &order {
            let eta = cfg.learning_rate / (1.0 + t as f64 * cfg.decay);
            t += 1;
            let row = &x.rows[i];
            let ys = signed(y[i]);
            let z = scale * row.dot(&v) + bias;
            let g = loss.dz(ys, z);
            if g != 0.0 {
                let step = eta * g / scale;
                for (j, xv) in row.iter() {
                    v[j] -= step * xv;
                }
                bias -= eta * g;
            }
            if cfg.l2 > 0.0 {
                scale /= 1.0 + 2.0 * eta * cfg.l2;
                if scale < 1e-9 {
                    v.iter_mut().for_each(|w| *w *= scale);
                    scale = 1.0;
                }
            }
        }
        let model = LinearModel {
            weights: v.iter().map(|w| w * scale).collect(),
            bias,
            loss,
            l2: cfg.l2,
        };
        let obj = model.objective(x, y);
        if !obj.is_finite() || !bias.is_finite() || model.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Diverged {
                epoch: epoch + 1,
                learning_rate: cfg.learning_rate,
            });
        }
    }
    Ok(LinearModel {
        weights: v.iter().map(|w| w * scale).collect(),
        bias,
        loss,
        l2: cfg.l2,
    })
}
