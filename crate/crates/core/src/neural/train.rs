use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{self, Mode};
use super::spec::{ModelSpec, Optimizer, TrainConfig};
use super::tensor::Params;
use crate::embeddings::{EmbeddingTable, EncodedBatch};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// Epoch (1-based) whose parameters were returned.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl History {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,train_acc,val_loss,val_acc\n");
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        for r in &self.epochs {
            let _ = writeln!(
                s,
                "{},{:.6},{:.6},{},{}",
                r.epoch,
                r.train_loss,
                r.train_accuracy,
                opt(r.val_loss),
                opt(r.val_accuracy)
            );
        }
        s
    }
}

fn accuracy(probs: &[f64], labels: &[u8]) -> f64 {
    let hits = probs
        .iter()
        .zip(labels)
        .filter(|(&p, &y)| u8::from(p > 0.5) == y)
        .count();
    hits as f64 / probs.len().max(1) as f64
}

/// Evaluation-mode loss and accuracy over a batch, in slices of `chunk`.
pub fn evaluate(
    spec: &ModelSpec,
    params: &Params,
    table: &EmbeddingTable,
    data: &EncodedBatch,
    chunk: usize,
) -> Result<(f64, f64)> {
    let mut probs = Vec::with_capacity(data.len());
    for b in data.chunks(chunk) {
        probs.extend(model::predict_proba(spec, params, table, &b)?);
    }
    Ok((
        model::bce_loss(&probs, &data.labels),
        accuracy(&probs, &data.labels),
    ))
}

struct AdamState {
    m: Params,
    v: Params,
    t: i32,
}

fn apply_update(
    params: &mut Params,
    grads: &Params,
    cfg: &TrainConfig,
    adam: &mut Option<AdamState>,
) {
    let lr = cfg.learning_rate;
    match (cfg.optimizer, adam) {
        (Optimizer::Adam { beta1, beta2, eps }, Some(st)) => {
            st.t += 1;
            let c1 = 1.0 - beta1.powi(st.t);
            let c2 = 1.0 - beta2.powi(st.t);
            let names = params.names();
            for name in &names {
                let g = grads.data(name);
                let m = st.m.slot(name);
                m.iter_mut()
                    .zip(g)
                    .for_each(|(m, g)| *m = beta1 * *m + (1.0 - beta1) * g);
                let v = st.v.slot(name);
                v.iter_mut()
                    .zip(g)
                    .for_each(|(v, g)| *v = beta2 * *v + (1.0 - beta2) * g * g);
                let (m, v) = (st.m.data(name), st.v.data(name));
                let w = params.slot(name);
                for i in 0..w.len() {
                    w[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
                }
            }
        }
        _ => {
            for name in params.names() {
                let g = grads.data(&name);
                params
                    .slot(&name)
                    .iter_mut()
                    .zip(g)
                    .for_each(|(w, g)| *w -= lr * g);
            }
        }
    }
}

/// Mini-batch training from `init`. Batches are reshuffled every epoch from a
/// generator seeded with `cfg.seed`, which also drives dropout. With a
/// validation set, training stops after `patience` epochs without a lower
/// validation loss and the best epoch's parameters are returned; without one,
/// the final parameters are returned.
pub fn train(
    spec: &ModelSpec,
    cfg: &TrainConfig,
    table: &EmbeddingTable,
    init: Params,
    data: &EncodedBatch,
    val: Option<&EncodedBatch>,
) -> Result<(Params, History)> {
    spec.validate()?;
    cfg.validate()?;
    model::check_params(spec, &init)?;
    if data.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let mut params = init;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = matches!(cfg.optimizer, Optimizer::Adam { .. }).then(|| AdamState {
        m: params.zeros_like(),
        v: params.zeros_like(),
        t: 0,
    });
    let mut history = History::default();
    let mut best: Option<(f64, Params)> = None;
    let mut since_best = 0;
    let mut order: Vec<usize> = (0..data.len()).collect();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut hits = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = data.select(chunk);
            let diverged = |e: Error| match e {
                Error::NonFinite { .. } => Error::Diverged {
                    epoch,
                    learning_rate: cfg.learning_rate,
                },
                e => e,
            };
            let cache = model::forward(spec, &params, table, &batch, Mode::Train(&mut rng))
                .map_err(diverged)?;
            let loss = model::bce_loss(&cache.probabilities, &batch.labels);
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    learning_rate: cfg.learning_rate,
                });
            }
            loss_sum += loss * batch.len() as f64;
            hits += accuracy(&cache.probabilities, &batch.labels) * batch.len() as f64;
            let mut grads =
                model::backward(spec, &params, table, &cache, &batch.labels).map_err(diverged)?;
            if let Some(max) = cfg.clip_norm {
                let norm = grads.global_norm();
                if norm > max {
                    grads.scale(max / norm);
                }
            }
            apply_update(&mut params, &grads, cfg, &mut adam);
            if !params.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    learning_rate: cfg.learning_rate,
                });
            }
        }
        let n = data.len() as f64;
        let mut rec = EpochRecord {
            epoch,
            train_loss: loss_sum / n,
            train_accuracy: hits / n,
            val_loss: None,
            val_accuracy: None,
        };
        if let Some(v) = val.filter(|v| !v.is_empty()) {
            let (vl, va) = evaluate(spec, &params, table, v, cfg.batch_size).map_err(|e| match e {
                Error::NonFinite { .. } => Error::Diverged {
                    epoch,
                    learning_rate: cfg.learning_rate,
                },
                e => e,
            })?;
            rec.val_loss = Some(vl);
            rec.val_accuracy = Some(va);
            if best.as_ref().is_none_or(|(b, _)| vl < *b) {
                best = Some((vl, params.clone()));
                history.best_epoch = epoch;
                since_best = 0;
            } else {
                since_best += 1;
            }
        } else {
            history.best_epoch = epoch;
        }
        history.epochs.push(rec);
        if cfg.patience > 0 && best.is_some() && since_best >= cfg.patience {
            history.stopped_early = epoch < cfg.epochs;
            break;
        }
    }
    let params = best.map(|(_, p)| p).unwrap_or(params);
    Ok((params, history))
}
