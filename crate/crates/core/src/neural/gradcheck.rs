//! Finite-difference verification of [`model::backward`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::model::{self, Mode};
use super::spec::{Architecture, ModelSpec};
use super::tensor::Params;
use crate::embeddings::{EmbeddingTable, EncodedBatch};
use crate::error::Result;
use crate::features::{SparseMatrix, SparseVector};

pub const DEFAULT_EPSILON: f64 = 1e-4;
pub const DEFAULT_TOLERANCE: f64 = 1e-3;
/// Denominator floor for the relative error, so that gradients that are zero
/// up to rounding on both sides do not produce 0/0.
pub const REL_ERR_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Serialize)]
pub struct GroupResult {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub architecture: Architecture,
    pub epsilon: f64,
    pub tolerance: f64,
    pub groups: Vec<GroupResult>,
    pub max_rel_error: f64,
    pub passed: bool,
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_ERR_FLOOR)
}

fn loss(spec: &ModelSpec, params: &Params, table: &EmbeddingTable, batch: &EncodedBatch) -> Result<f64> {
    let p = model::forward(spec, params, table, batch, Mode::Eval)?.probabilities;
    Ok(model::bce_loss(&p, &batch.labels))
}

/// Compare analytic gradients against central differences for every
/// parameter. Dropout must be 0 so that the loss is deterministic.
/// `corrupt` perturbs the analytic output-bias gradient before comparison;
/// it exists to show that the check can fail.
pub fn check_gradients(
    spec: &ModelSpec,
    params: &Params,
    table: &EmbeddingTable,
    batch: &EncodedBatch,
    epsilon: f64,
    tolerance: f64,
    corrupt: bool,
) -> Result<GradCheckReport> {
    if spec.dropout != 0.0 {
        return Err(crate::Error::invalid("gradient checks need dropout = 0"));
    }
    let mut noop = ChaCha8Rng::seed_from_u64(0);
    let cache = model::forward(spec, params, table, batch, Mode::Train(&mut noop))?;
    let mut analytic = model::backward(spec, params, table, &cache, &batch.labels)?;
    if corrupt {
        let g = analytic.slot("out.b");
        g[0] = g[0] * 1.5 + 1e-3;
    }
    let mut work = params.clone();
    let mut groups = Vec::new();
    for name in params.names() {
        let n = params.data(&name).len();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            let orig = params.data(&name)[i];
            work.slot(&name)[i] = orig + epsilon;
            let up = loss(spec, &work, table, batch)?;
            work.slot(&name)[i] = orig - epsilon;
            let down = loss(spec, &work, table, batch)?;
            work.slot(&name)[i] = orig;
            let numeric = (up - down) / (2.0 * epsilon);
            worst = worst.max(relative_error(analytic.data(&name)[i], numeric));
        }
        groups.push(GroupResult {
            name,
            checked: n,
            max_rel_error: worst,
        });
    }
    let max_rel_error = groups.iter().map(|g| g.max_rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        architecture: spec.architecture,
        epsilon,
        tolerance,
        groups,
        max_rel_error,
        passed: max_rel_error <= tolerance,
    })
}

/// A small random problem for gradient checks: four samples over a 12-row
/// table of 5-dim vectors, filter widths {2, 3} × 3, dropout 0, trainable
/// embedding, and (for the recurrent CNN) 8-dim document features. Sample
/// lengths are `max_len`, `max_len - 2`, 1 and `max_len - 1` (at least 1).
pub struct Problem {
    pub spec: ModelSpec,
    pub params: Params,
    pub table: EmbeddingTable,
    pub batch: EncodedBatch,
}

pub fn small_problem(
    architecture: Architecture,
    hidden: usize,
    max_len: usize,
    seed: u64,
) -> Result<Problem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = 5;
    let rows: Vec<(String, Vec<f64>)> = (0..10)
        .map(|i| {
            let v = (0..dim).map(|_| rng.gen_range(-0.5..0.5)).collect();
            (format!("w{i}"), v)
        })
        .collect();
    let table = EmbeddingTable::from_rows(rows, dim, seed)?;
    let mut spec = ModelSpec::new(architecture, table.n_rows(), dim);
    spec.hidden_dim = hidden;
    spec.filter_widths = vec![2, 3];
    spec.filter_count = 3;
    spec.dropout = 0.0;
    spec.max_len = max_len;
    spec.trainable_embedding = true;
    if architecture == Architecture::RecurrentCnn {
        spec.doc_feature_dim = 3;
        spec.doc_input_dim = 8;
    }
    spec.validate()?;
    let params = model::init_params(&spec, &table, seed)?;
    let lengths = [
        max_len,
        max_len.saturating_sub(2).max(1),
        1,
        max_len.saturating_sub(1).max(1),
    ];
    let mut indices = Vec::new();
    for &len in &lengths {
        for p in 0..spec.max_len {
            indices.push(if p < len {
                rng.gen_range(1..table.n_rows())
            } else {
                crate::embeddings::PAD_INDEX
            });
        }
    }
    let mut batch = EncodedBatch {
        indices,
        lengths: lengths.to_vec(),
        labels: vec![1, 0, 1, 0],
        max_len: spec.max_len,
        doc_features: None,
    };
    if architecture == Architecture::RecurrentCnn {
        let rows = (0..lengths.len())
            .map(|_| {
                let pairs: Vec<(usize, f64)> = (0..spec.doc_input_dim)
                    .filter_map(|j| {
                        if rng.gen_bool(0.5) {
                            Some((j, rng.gen_range(0.0..1.0)))
                        } else {
                            None
                        }
                    })
                    .collect();
                SparseVector::from_pairs(pairs)
            })
            .collect();
        batch = batch.with_doc_features(SparseMatrix::new(rows, spec.doc_input_dim)?)?;
    }
    Ok(Problem {
        spec,
        params,
        table,
        batch,
    })
}
