//! Pretrained word vectors in the GloVe text format, and padded index batches.

use std::collections::{HashMap, HashSet};
use std::io::BufRead;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features::SparseMatrix;

pub const PAD_INDEX: usize = 0;
pub const OOV_INDEX: usize = 1;
pub const DEFAULT_OOV_SEED: u64 = 7;
const OOV_RANGE: f64 = 0.25;

/// Token → row lookup over a dense `(V + 2) × dim` matrix. Row 0 is padding
/// (all zeros), row 1 the out-of-vocabulary vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    vocab: HashMap<String, usize>,
    tokens: Vec<String>,
    matrix: Vec<f64>,
    dim: usize,
}

impl EmbeddingTable {
    /// Build from `(token, vector)` pairs; the first occurrence of a token wins.
    pub fn from_rows(rows: Vec<(String, Vec<f64>)>, dim: usize, oov_seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dim must be at least 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(oov_seed);
        let mut matrix = vec![0.0; 2 * dim];
        for v in &mut matrix[dim..] {
            *v = rng.gen_range(-OOV_RANGE..=OOV_RANGE);
        }
        let mut vocab = HashMap::new();
        let mut tokens = Vec::new();
        for (token, vec) in rows {
            if vec.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: vec.len(),
                });
            }
            if vocab.contains_key(&token) {
                continue;
            }
            vocab.insert(token.clone(), tokens.len() + 2);
            tokens.push(token);
            matrix.extend_from_slice(&vec);
        }
        Ok(EmbeddingTable {
            vocab,
            tokens,
            matrix,
            dim,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of real tokens (excluding pad and OOV rows).
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn n_rows(&self) -> usize {
        self.tokens.len() + 2
    }

    pub fn index_of(&self, token: &str) -> usize {
        self.vocab.get(token).copied().unwrap_or(OOV_INDEX)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.vocab.contains_key(token)
    }

    pub fn row(&self, index: usize) -> &[f64] {
        &self.matrix[index * self.dim..(index + 1) * self.dim]
    }

    /// Vector for a token; the OOV vector when absent.
    pub fn lookup(&self, token: &str) -> &[f64] {
        self.row(self.index_of(token))
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    /// Tokens in row order (row `i + 2` holds `tokens()[i]`).
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// SHA-256 over the token list in row order plus the dimension.
    pub fn vocab_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.dim as u64).to_le_bytes());
        for t in &self.tokens {
            h.update(t.as_bytes());
            h.update([0u8]);
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Parse a GloVe-style text stream. A leading word2vec header line
/// (`<count> <dim>`) is skipped.
pub fn read_embeddings<R: BufRead>(
    reader: R,
    origin: &Path,
    expected_dim: Option<usize>,
    restrict_to: Option<&HashSet<String>>,
    oov_seed: u64,
) -> Result<EmbeddingTable> {
    let fmt_err = |line: usize, reason: String| Error::EmbeddingFormat {
        path: origin.to_path_buf(),
        line,
        reason,
    };
    let mut dim = expected_dim;
    let mut rows = Vec::new();
    let mut saw_entry = false;
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(origin, e))?;
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else {
            continue;
        };
        let rest: Vec<&str> = fields.collect();
        if lineno == 1
            && rest.len() == 1
            && token.parse::<u64>().is_ok()
            && rest[0].parse::<u64>().is_ok()
        {
            continue;
        }
        saw_entry = true;
        let d = *dim.get_or_insert(rest.len());
        if rest.len() != d {
            return Err(fmt_err(
                lineno,
                format!("expected {d} values, found {}", rest.len()),
            ));
        }
        if d == 0 {
            return Err(fmt_err(lineno, "token has no vector".into()));
        }
        if restrict_to.is_some_and(|set| !set.contains(token)) {
            continue;
        }
        let vec = rest
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| fmt_err(lineno, format!("bad number: {e}")))?;
        if vec.iter().any(|v| !v.is_finite()) {
            return Err(fmt_err(lineno, "non-finite value".into()));
        }
        rows.push((token.to_string(), vec));
    }
    if !saw_entry {
        return Err(fmt_err(0, "file contains no embeddings".into()));
    }
    EmbeddingTable::from_rows(rows, dim.expect("set by the first entry"), oov_seed)
}

pub fn load_embeddings(
    path: &Path,
    expected_dim: Option<usize>,
    restrict_to: Option<&HashSet<String>>,
) -> Result<EmbeddingTable> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_embeddings(
        std::io::BufReader::new(file),
        path,
        expected_dim,
        restrict_to,
        DEFAULT_OOV_SEED,
    )
}

/// Padded index matrix for a batch of sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedBatch {
    /// Row-major `batch × max_len`.
    pub indices: Vec<usize>,
    pub lengths: Vec<usize>,
    pub labels: Vec<u8>,
    pub max_len: usize,
    /// Per-sample document features (one row per sample), used by models
    /// with a document-feature branch.
    pub doc_features: Option<SparseMatrix>,
}

impl EncodedBatch {
    pub fn len(&self) -> usize {
        self.lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lengths.is_empty()
    }

    pub fn sample(&self, i: usize) -> &[usize] {
        &self.indices[i * self.max_len..i * self.max_len + self.lengths[i]]
    }

    pub fn with_doc_features(mut self, features: SparseMatrix) -> Result<Self> {
        if features.n_rows() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: features.n_rows(),
            });
        }
        self.doc_features = Some(features);
        Ok(self)
    }

    /// Subset of samples, in the given order.
    pub fn select(&self, idx: &[usize]) -> EncodedBatch {
        let mut indices = Vec::with_capacity(idx.len() * self.max_len);
        for &i in idx {
            indices.extend_from_slice(&self.indices[i * self.max_len..(i + 1) * self.max_len]);
        }
        EncodedBatch {
            indices,
            lengths: idx.iter().map(|&i| self.lengths[i]).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            max_len: self.max_len,
            doc_features: self.doc_features.as_ref().map(|m| m.select_rows(idx)),
        }
    }

    /// Consecutive chunks of at most `batch_size` samples.
    pub fn chunks(&self, batch_size: usize) -> Vec<EncodedBatch> {
        let n = self.len();
        (0..n)
            .step_by(batch_size.max(1))
            .map(|s| self.select(&(s..(s + batch_size).min(n)).collect::<Vec<_>>()))
            .collect()
    }
}

/// Map tokens to table rows, truncating to the first `max_len` tokens and
/// padding with [`PAD_INDEX`].
pub fn encode_batch(
    seqs: &[Vec<String>],
    labels: &[u8],
    table: &EmbeddingTable,
    max_len: usize,
) -> Result<EncodedBatch> {
    if max_len == 0 {
        return Err(Error::invalid("max_len must be at least 1"));
    }
    if seqs.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: seqs.len(),
            got: labels.len(),
        });
    }
    let mut indices = vec![PAD_INDEX; seqs.len() * max_len];
    let mut lengths = Vec::with_capacity(seqs.len());
    for (r, seq) in seqs.iter().enumerate() {
        let n = seq.len().min(max_len);
        for (c, tok) in seq[..n].iter().enumerate() {
            indices[r * max_len + c] = table.index_of(tok);
        }
        lengths.push(n);
    }
    Ok(EncodedBatch {
        indices,
        lengths,
        labels: labels.to_vec(),
        max_len,
        doc_features: None,
    })
}
