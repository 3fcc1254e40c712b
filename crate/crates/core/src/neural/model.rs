//! Forward and backward passes for the five architectures.
//!
//! Every model maps a padded token-index batch to one sigmoid probability per
//! sample. Only the first `length` positions of a sample are read: convolution
//! windows past the end see zero vectors, the recurrent layers run over the
//! true length, and attention normalizes over real tokens only.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::layers::{self, AttentionCache, ConvCache, LstmCache, LstmGrads, LstmWeights};
use super::spec::{Architecture, ModelSpec};
use super::tensor::{Params, Tensor};
use crate::embeddings::{EmbeddingTable, EncodedBatch, PAD_INDEX};
use crate::error::{Error, Result};
use crate::features::SparseVector;
use crate::linear::sigmoid;

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` inside the loss.
pub const PROB_CLAMP: f64 = 1e-7;

/// Fixed number of gradient-accumulation chunks per batch; the reduction
/// order depends only on this, never on the thread count.
const GRAD_CHUNKS: usize = 8;

pub enum Mode<'a> {
    Eval,
    Train(&'a mut dyn RngCore),
}

impl Mode<'_> {
    pub fn is_train(&self) -> bool {
        matches!(self, Mode::Train(_))
    }
}

fn lstm_names(dir: &str) -> [String; 3] {
    [
        format!("lstm_{dir}.w"),
        format!("lstm_{dir}.u"),
        format!("lstm_{dir}.b"),
    ]
}

fn conv_names(width: usize) -> [String; 2] {
    [format!("conv{width}.w"), format!("conv{width}.b")]
}

/// Parameter names and shapes, with the fan-in used for initialization.
fn layout(spec: &ModelSpec) -> Vec<(String, Vec<usize>, usize)> {
    let (e, h) = (spec.embedding_dim, spec.hidden_dim);
    let arch = spec.architecture;
    let mut out = Vec::new();
    if spec.trainable_embedding {
        out.push(("embedding".to_string(), vec![spec.vocab_rows, e], 1));
    }
    if arch.has_conv() {
        for &k in &spec.filter_widths {
            let [w, b] = conv_names(k);
            out.push((w, vec![spec.filter_count, k * e], k * e));
            out.push((b, vec![spec.filter_count], k * e));
        }
    }
    let mut dirs = Vec::new();
    if arch.has_forward_lstm() {
        dirs.push("fwd");
    }
    if arch.has_backward_lstm() {
        dirs.push("bwd");
    }
    for dir in dirs {
        let [w, u, b] = lstm_names(dir);
        out.push((w, vec![4 * h, e], e));
        out.push((u, vec![4 * h, h], h));
        out.push((b, vec![4 * h], h));
    }
    if arch == Architecture::BiLstmAttention {
        out.push(("attn.w".into(), vec![2 * h], 2 * h));
    }
    if arch == Architecture::RecurrentCnn {
        let (d, v) = (spec.doc_feature_dim, spec.doc_input_dim);
        out.push(("doc_proj.w".into(), vec![d, v], v));
        out.push(("doc_proj.b".into(), vec![d], v));
    }
    let f = spec.feature_dim();
    out.push(("out.w".into(), vec![1, f], f));
    out.push(("out.b".into(), vec![1], f));
    out
}

fn check_table(spec: &ModelSpec, table: &EmbeddingTable) -> Result<()> {
    if table.n_rows() != spec.vocab_rows {
        return Err(Error::DimensionMismatch {
            expected: spec.vocab_rows,
            got: table.n_rows(),
        });
    }
    if table.dim() != spec.embedding_dim {
        return Err(Error::DimensionMismatch {
            expected: spec.embedding_dim,
            got: table.dim(),
        });
    }
    Ok(())
}

/// Seeded initialization: every tensor uniform in `±1/√fan_in`, drawn in
/// parameter-name order. A trainable embedding starts from the table.
pub fn init_params(spec: &ModelSpec, table: &EmbeddingTable, seed: u64) -> Result<Params> {
    spec.validate()?;
    check_table(spec, table)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shapes = layout(spec);
    shapes.sort_by(|a, b| a.0.cmp(&b.0));
    let mut params = Params::new();
    for (name, shape, fan_in) in shapes {
        let t = if name == "embedding" {
            Tensor::new(shape, table.matrix().to_vec())?
        } else {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let n: usize = shape.iter().product();
            let data = (0..n).map(|_| rng.gen_range(-bound..=bound)).collect();
            Tensor::new(shape, data)?
        };
        params.insert(name, t);
    }
    Ok(params)
}

/// Check that `params` has exactly the tensors `spec` requires.
pub fn check_params(spec: &ModelSpec, params: &Params) -> Result<()> {
    let want = layout(spec);
    if want.len() != params.names().len() {
        return Err(Error::invalid(format!(
            "parameter set has {} tensors, model needs {}",
            params.names().len(),
            want.len()
        )));
    }
    for (name, shape, _) in want {
        match params.get(&name) {
            Some(t) if t.shape == shape => {}
            Some(t) => {
                return Err(Error::invalid(format!(
                    "parameter `{name}` has shape {:?}, expected {shape:?}",
                    t.shape
                )))
            }
            None => return Err(Error::invalid(format!("missing parameter `{name}`"))),
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
struct SampleCache {
    tokens: Vec<usize>,
    xs: Vec<f64>,
    xs_rev: Vec<f64>,
    conv: Vec<ConvCache>,
    fwd: Option<LstmCache>,
    bwd: Option<LstmCache>,
    /// Attention input, position order, `len × 2H`.
    hs: Vec<f64>,
    attn: Option<AttentionCache>,
    doc_x: Option<SparseVector>,
    doc_out: Vec<f64>,
    mask: Vec<f64>,
    feat_dropped: Vec<f64>,
}

/// Everything `backward` needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub probabilities: Vec<f64>,
    samples: Vec<SampleCache>,
    params_version: u64,
    train_mode: bool,
}

impl ForwardCache {
    /// Attention weights per sample (empty vectors for other architectures).
    pub fn attention(&self) -> Vec<Vec<f64>> {
        self.samples
            .iter()
            .map(|s| s.attn.as_ref().map(|a| a.alpha.clone()).unwrap_or_default())
            .collect()
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }
}

struct Ctx<'a> {
    spec: &'a ModelSpec,
    params: &'a Params,
    emb: &'a [f64],
}

impl<'a> Ctx<'a> {
    fn new(spec: &'a ModelSpec, params: &'a Params, table: &'a EmbeddingTable) -> Result<Self> {
        check_table(spec, table)?;
        let emb = if spec.trainable_embedding {
            params
                .get("embedding")
                .ok_or_else(|| Error::invalid("trainable embedding parameter missing"))?
                .data
                .as_slice()
        } else {
            table.matrix()
        };
        Ok(Ctx { spec, params, emb })
    }

    fn lstm(&self, dir: &str) -> LstmWeights<'a> {
        let [w, u, b] = lstm_names(dir);
        LstmWeights {
            w: self.params.data(&w),
            u: self.params.data(&u),
            b: self.params.data(&b),
            hidden: self.spec.hidden_dim,
            input: self.spec.embedding_dim,
        }
    }

    fn forward_sample(
        &self,
        tokens: &[usize],
        doc_x: Option<&SparseVector>,
        mask: Vec<f64>,
    ) -> Result<(f64, SampleCache)> {
        let spec = self.spec;
        let arch = spec.architecture;
        let (e, h) = (spec.embedding_dim, spec.hidden_dim);
        let len = tokens.len();
        let mut xs = Vec::with_capacity(len * e);
        for &t in tokens {
            if t >= spec.vocab_rows {
                return Err(Error::invalid(format!(
                    "token index {t} outside embedding table of {} rows",
                    spec.vocab_rows
                )));
            }
            xs.extend_from_slice(&self.emb[t * e..(t + 1) * e]);
        }
        let mut feat = Vec::with_capacity(spec.feature_dim());

        let mut conv = Vec::new();
        if arch.has_conv() {
            for &k in &spec.filter_widths {
                let [w, b] = conv_names(k);
                let c = layers::conv_forward(
                    self.params.data(&w),
                    self.params.data(&b),
                    &xs,
                    len,
                    e,
                    k,
                );
                feat.extend_from_slice(&c.pooled);
                conv.push(c);
            }
        }

        let fwd = arch
            .has_forward_lstm()
            .then(|| layers::lstm_forward(&self.lstm("fwd"), &xs, len));
        let mut xs_rev = Vec::new();
        let bwd = if arch.has_backward_lstm() {
            xs_rev.reserve(len * e);
            for t in (0..len).rev() {
                xs_rev.extend_from_slice(&xs[t * e..(t + 1) * e]);
            }
            Some(layers::lstm_forward(&self.lstm("bwd"), &xs_rev, len))
        } else {
            None
        };

        let mut hs = Vec::new();
        let mut attn = None;
        match arch {
            Architecture::Cnn => {}
            Architecture::Lstm => feat.extend(fwd.as_ref().expect("lstm").last_h(h)),
            Architecture::BiLstm | Architecture::RecurrentCnn => {
                feat.extend(fwd.as_ref().expect("fwd").last_h(h));
                feat.extend(bwd.as_ref().expect("bwd").last_h(h));
            }
            Architecture::BiLstmAttention => {
                let (f, b) = (fwd.as_ref().expect("fwd"), bwd.as_ref().expect("bwd"));
                hs.reserve(len * 2 * h);
                for t in 0..len {
                    hs.extend_from_slice(f.h_at(t, h));
                    hs.extend_from_slice(b.h_at(len - 1 - t, h));
                }
                let a = layers::attention_forward(self.params.data("attn.w"), &hs, len, 2 * h);
                feat.extend_from_slice(&a.r_tanh);
                attn = Some(a);
            }
        }

        let mut doc_out = Vec::new();
        let doc_x = if arch == Architecture::RecurrentCnn {
            let x = doc_x.ok_or_else(|| {
                Error::invalid("the recurrent CNN needs document features in the batch")
            })?;
            if x.indices.last().is_some_and(|&i| i >= spec.doc_input_dim) {
                return Err(Error::DimensionMismatch {
                    expected: spec.doc_input_dim,
                    got: x.indices.last().copied().unwrap_or(0) + 1,
                });
            }
            let d = spec.doc_feature_dim;
            let w = self.params.data("doc_proj.w");
            let mut z = self.params.data("doc_proj.b").to_vec();
            for (r, zr) in z.iter_mut().enumerate() {
                let row = &w[r * spec.doc_input_dim..(r + 1) * spec.doc_input_dim];
                *zr += x.dot(row);
            }
            debug_assert_eq!(z.len(), d);
            doc_out = z.iter().map(|v| v.tanh()).collect();
            feat.extend_from_slice(&doc_out);
            Some(x.clone())
        } else {
            None
        };

        let feat_dropped: Vec<f64> = feat.iter().zip(&mask).map(|(f, m)| f * m).collect();
        let z = layers::dot(self.params.data("out.w"), &feat_dropped) + self.params.data("out.b")[0];
        let p = sigmoid(z);
        if !z.is_finite() || feat_dropped.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                layer: format!("{arch} output"),
            });
        }
        Ok((
            p,
            SampleCache {
                tokens: tokens.to_vec(),
                xs,
                xs_rev,
                conv,
                fwd,
                bwd,
                hs,
                attn,
                doc_x,
                doc_out,
                mask,
                feat_dropped,
            },
        ))
    }

    fn backward_sample(&self, s: &SampleCache, dz: f64, g: &mut Params) {
        let spec = self.spec;
        let arch = spec.architecture;
        let (e, h) = (spec.embedding_dim, spec.hidden_dim);
        let len = s.tokens.len();

        g.slot("out.w")
            .iter_mut()
            .zip(&s.feat_dropped)
            .for_each(|(d, f)| *d += dz * f);
        g.slot("out.b")[0] += dz;
        let dfeat: Vec<f64> = self
            .params
            .data("out.w")
            .iter()
            .zip(&s.mask)
            .map(|(w, m)| dz * w * m)
            .collect();

        let mut dxs = vec![0.0; len * e];
        let mut off = 0;
        if arch.has_conv() {
            let fc = spec.filter_count;
            for (ci, &k) in spec.filter_widths.iter().enumerate() {
                let [wn, bn] = conv_names(k);
                let [dw, db] = g.slots([wn.as_str(), bn.as_str()]);
                let dx = layers::conv_backward(
                    self.params.data(&wn),
                    &s.xs,
                    len,
                    e,
                    k,
                    &s.conv[ci],
                    &dfeat[off..off + fc],
                    dw,
                    db,
                );
                dxs.iter_mut().zip(&dx).for_each(|(a, b)| *a += b);
                off += fc;
            }
        }

        let mut dh_f = vec![0.0; len * h];
        let mut dh_b = vec![0.0; len * h];
        match arch {
            Architecture::Cnn => {}
            Architecture::Lstm => {
                if len > 0 {
                    dh_f[(len - 1) * h..].copy_from_slice(&dfeat[off..off + h]);
                }
                off += h;
            }
            Architecture::BiLstm | Architecture::RecurrentCnn => {
                if len > 0 {
                    dh_f[(len - 1) * h..].copy_from_slice(&dfeat[off..off + h]);
                    dh_b[(len - 1) * h..].copy_from_slice(&dfeat[off + h..off + 2 * h]);
                }
                off += 2 * h;
            }
            Architecture::BiLstmAttention => {
                let a = s.attn.as_ref().expect("attention cache");
                let dhs = layers::attention_backward(
                    self.params.data("attn.w"),
                    &s.hs,
                    len,
                    2 * h,
                    a,
                    &dfeat[off..off + 2 * h],
                    g.slot("attn.w"),
                );
                for t in 0..len {
                    let row = &dhs[t * 2 * h..(t + 1) * 2 * h];
                    dh_f[t * h..(t + 1) * h].copy_from_slice(&row[..h]);
                    let tb = len - 1 - t;
                    dh_b[tb * h..(tb + 1) * h].copy_from_slice(&row[h..]);
                }
                off += 2 * h;
            }
        }

        if let Some(fc) = &s.fwd {
            let dx = self.lstm_backward("fwd", fc, &s.xs, &dh_f, g);
            dxs.iter_mut().zip(&dx).for_each(|(a, b)| *a += b);
        }
        if let Some(bc) = &s.bwd {
            let dx_rev = self.lstm_backward("bwd", bc, &s.xs_rev, &dh_b, g);
            for t in 0..len {
                let src = &dx_rev[(len - 1 - t) * e..(len - t) * e];
                dxs[t * e..(t + 1) * e]
                    .iter_mut()
                    .zip(src)
                    .for_each(|(a, b)| *a += b);
            }
        }

        if let Some(x) = &s.doc_x {
            let d = spec.doc_feature_dim;
            let v = spec.doc_input_dim;
            let dd: Vec<f64> = dfeat[off..off + d]
                .iter()
                .zip(&s.doc_out)
                .map(|(g, t)| g * (1.0 - t * t))
                .collect();
            {
                let dw = g.slot("doc_proj.w");
                for (r, &gr) in dd.iter().enumerate() {
                    if gr != 0.0 {
                        for (i, xv) in x.iter() {
                            dw[r * v + i] += gr * xv;
                        }
                    }
                }
            }
            g.slot("doc_proj.b")
                .iter_mut()
                .zip(&dd)
                .for_each(|(a, b)| *a += b);
        }

        if spec.trainable_embedding {
            let demb = g.slot("embedding");
            for (pos, &tok) in s.tokens.iter().enumerate() {
                if tok == PAD_INDEX {
                    continue;
                }
                demb[tok * e..(tok + 1) * e]
                    .iter_mut()
                    .zip(&dxs[pos * e..(pos + 1) * e])
                    .for_each(|(a, b)| *a += b);
            }
        }
    }

    fn lstm_backward(
        &self,
        dir: &str,
        cache: &LstmCache,
        xs: &[f64],
        dh: &[f64],
        g: &mut Params,
    ) -> Vec<f64> {
        let [wn, un, bn] = lstm_names(dir);
        let [w, u, b] = g.slots([wn.as_str(), un.as_str(), bn.as_str()]);
        layers::lstm_backward(&self.lstm(dir), cache, xs, dh, &mut LstmGrads { w, u, b })
    }
}

/// Run the model over a batch. In training mode dropout masks are drawn from
/// the supplied generator (nothing is drawn when dropout is 0); evaluation
/// mode never touches a generator.
pub fn forward(
    spec: &ModelSpec,
    params: &Params,
    table: &EmbeddingTable,
    batch: &EncodedBatch,
    mode: Mode<'_>,
) -> Result<ForwardCache> {
    let ctx = Ctx::new(spec, params, table)?;
    let fd = spec.feature_dim();
    let train_mode = mode.is_train();
    let masks: Vec<Vec<f64>> = match mode {
        Mode::Train(rng) if spec.dropout > 0.0 => {
            let keep = 1.0 - spec.dropout;
            (0..batch.len())
                .map(|_| {
                    (0..fd)
                        .map(|_| {
                            if rng.gen::<f64>() < keep {
                                1.0 / keep
                            } else {
                                0.0
                            }
                        })
                        .collect()
                })
                .collect()
        }
        _ => vec![vec![1.0; fd]; batch.len()],
    };
    if let Some(df) = &batch.doc_features {
        if df.n_rows() != batch.len() {
            return Err(Error::DimensionMismatch {
                expected: batch.len(),
                got: df.n_rows(),
            });
        }
    }
    let results: Vec<Result<(f64, SampleCache)>> = masks
        .into_par_iter()
        .enumerate()
        .map(|(i, mask)| {
            let doc = batch.doc_features.as_ref().map(|m| &m.rows[i]);
            ctx.forward_sample(batch.sample(i), doc, mask)
        })
        .collect();
    let mut probabilities = Vec::with_capacity(batch.len());
    let mut samples = Vec::with_capacity(batch.len());
    for r in results {
        let (p, s) = r?;
        probabilities.push(p);
        samples.push(s);
    }
    Ok(ForwardCache {
        probabilities,
        samples,
        params_version: params.version(),
        train_mode,
    })
}

/// Mean binary cross-entropy with clamped probabilities.
pub fn bce_loss(probabilities: &[f64], labels: &[u8]) -> f64 {
    probabilities
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            if y == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum::<f64>()
        / probabilities.len().max(1) as f64
}

/// Gradient of [`bce_loss`] with respect to every parameter.
pub fn backward(
    spec: &ModelSpec,
    params: &Params,
    table: &EmbeddingTable,
    cache: &ForwardCache,
    labels: &[u8],
) -> Result<Params> {
    if cache.params_version != params.version() {
        return Err(Error::StaleCache(
            "parameters changed since the forward pass".into(),
        ));
    }
    if !cache.train_mode {
        return Err(Error::StaleCache(
            "cache comes from an evaluation-mode forward pass".into(),
        ));
    }
    if labels.len() != cache.len() {
        return Err(Error::DimensionMismatch {
            expected: cache.len(),
            got: labels.len(),
        });
    }
    let ctx = Ctx::new(spec, params, table)?;
    let n = cache.len();
    let dzs: Vec<f64> = cache
        .probabilities
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            if !(PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&p) {
                0.0
            } else {
                p - f64::from(y)
            }
        })
        .collect();
    let chunk = n.div_ceil(GRAD_CHUNKS).max(1);
    let partials: Vec<Params> = (0..n)
        .step_by(chunk)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|start| {
            let mut g = params.zeros_like();
            let end = (start + chunk).min(n);
            for (sample, &dz) in cache.samples[start..end].iter().zip(&dzs[start..end]) {
                ctx.backward_sample(sample, dz, &mut g);
            }
            g
        })
        .collect();
    let mut grads = params.zeros_like();
    for p in &partials {
        grads.add_assign(p);
    }
    grads.scale(1.0 / n.max(1) as f64);
    if !grads.is_finite() {
        return Err(Error::NonFinite {
            layer: "gradients".into(),
        });
    }
    Ok(grads)
}

/// Evaluation-mode probabilities.
pub fn predict_proba(
    spec: &ModelSpec,
    params: &Params,
    table: &EmbeddingTable,
    batch: &EncodedBatch,
) -> Result<Vec<f64>> {
    Ok(forward(spec, params, table, batch, Mode::Eval)?.probabilities)
}

/// Attention weights, `batch × max_len`, zero at padding.
pub fn attention_weights(
    spec: &ModelSpec,
    params: &Params,
    table: &EmbeddingTable,
    batch: &EncodedBatch,
) -> Result<Tensor> {
    if spec.architecture != Architecture::BiLstmAttention {
        return Err(Error::WrongArchitecture(format!(
            "attention weights need bilstm-attn, model is {}",
            spec.architecture
        )));
    }
    let cache = forward(spec, params, table, batch, Mode::Eval)?;
    let mut data = vec![0.0; batch.len() * batch.max_len];
    for (i, a) in cache.attention().into_iter().enumerate() {
        data[i * batch.max_len..i * batch.max_len + a.len()].copy_from_slice(&a);
    }
    Tensor::new(vec![batch.len(), batch.max_len], data)
}
