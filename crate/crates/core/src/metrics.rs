//! Confusion-matrix statistics and ROC-AUC. The positive class is
//! Deceptive (label 1).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when any ratio had a zero denominator and was reported as 0.
    pub degenerate: bool,
}

pub fn confusion(y_true: &[u8], y_pred: &[u8]) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(Error::DimensionMismatch {
            expected: y_true.len(),
            got: y_pred.len(),
        });
    }
    if y_true.is_empty() {
        return Err(Error::invalid("confusion matrix over zero samples"));
    }
    let mut cm = ConfusionMatrix::default();
    for (&t, &p) in y_true.iter().zip(y_pred) {
        match (t, p) {
            (1, 1) => cm.tp += 1,
            (0, 1) => cm.fp += 1,
            (1, 0) => cm.fn_ += 1,
            (0, 0) => cm.tn += 1,
            _ => return Err(Error::invalid(format!("non-binary label pair ({t}, {p})"))),
        }
    }
    Ok(cm)
}

fn ratio(num: usize, den: usize, degenerate: &mut bool) -> f64 {
    if den == 0 {
        *degenerate = true;
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// F1 as the harmonic mean of precision and recall (0 when both are 0).
pub fn f1_from(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

pub fn scores(cm: &ConfusionMatrix) -> Result<Scores> {
    if cm.total() == 0 {
        return Err(Error::invalid("empty confusion matrix"));
    }
    let mut degenerate = false;
    let accuracy = ratio(cm.tp + cm.tn, cm.total(), &mut degenerate);
    let precision = ratio(cm.tp, cm.tp + cm.fp, &mut degenerate);
    let recall = ratio(cm.tp, cm.tp + cm.fn_, &mut degenerate);
    if precision + recall == 0.0 {
        degenerate = true;
    }
    Ok(Scores {
        accuracy,
        precision,
        recall,
        f1: f1_from(precision, recall),
        degenerate,
    })
}

/// Area under the ROC curve as the normalized Mann–Whitney U statistic,
/// using mid-ranks so tied scores count one half.
pub fn roc_auc(y_true: &[u8], scores: &[f64]) -> Result<f64> {
    if y_true.len() != scores.len() {
        return Err(Error::DimensionMismatch {
            expected: y_true.len(),
            got: scores.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("NaN score"));
    }
    let n_pos = y_true.iter().filter(|&&y| y == 1).count();
    let n_neg = y_true.iter().filter(|&&y| y == 0).count();
    if n_pos + n_neg != y_true.len() {
        return Err(Error::invalid("labels must be 0 or 1"));
    }
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::invalid("roc_auc needs both classes present"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1..=j+1 share their mean
        let mid = (i + j) as f64 / 2.0 + 1.0;
        pos_rank_sum += mid * order[i..=j].iter().filter(|&&k| y_true[k] == 1).count() as f64;
        i = j + 1;
    }
    let u = pos_rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos * n_neg) as f64)
}

/// Evaluation of one model on one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub features: String,
    pub split_seed: u64,
    pub n_samples: usize,
    pub confusion: ConfusionMatrix,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: f64,
    pub degenerate: bool,
}

impl EvalReport {
    pub fn new(
        model: impl Into<String>,
        features: impl Into<String>,
        split_seed: u64,
        y_true: &[u8],
        y_pred: &[u8],
        scores_: &[f64],
    ) -> Result<Self> {
        let confusion = confusion(y_true, y_pred)?;
        let s = scores(&confusion)?;
        let auc = roc_auc(y_true, scores_)?;
        Ok(EvalReport {
            model: model.into(),
            features: features.into(),
            split_seed,
            n_samples: y_true.len(),
            confusion,
            accuracy: s.accuracy,
            precision: s.precision,
            recall: s.recall,
            f1: s.f1,
            auc,
            degenerate: s.degenerate,
        })
    }

    /// Aligned text rendering in the Accuracy / Precision / Recall / F1 / AUC layout.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!(
            "{:<28} {:>9} {:>9} {:>9} {:>9} {:>9}\n",
            "Model", "Accuracy", "Precision", "Recall", "F1", "AUC"
        ));
        s.push_str(&format!(
            "{:<28} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>9.4}\n",
            format!("{} + {}", self.model, self.features),
            self.accuracy,
            self.precision,
            self.recall,
            self.f1,
            self.auc
        ));
        let cm = &self.confusion;
        s.push_str(&format!(
            "confusion: TP={} FP={} FN={} TN={}  (n={}, split seed {})\n",
            cm.tp, cm.fp, cm.fn_, cm.tn, self.n_samples, self.split_seed
        ));
        s
    }
}
