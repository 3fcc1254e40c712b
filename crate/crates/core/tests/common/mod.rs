//! Reference implementations shared by the oracle and acceptance tests.
#![allow(dead_code)]

use std::collections::HashMap;

use opspam::features::{SparseMatrix, SparseVector};

/// AUC as the fraction of (positive, negative) pairs ordered correctly,
/// ties counting one half.
pub fn pair_count_auc(y: &[u8], s: &[f64]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &yi) in y.iter().enumerate() {
        for (j, &yj) in y.iter().enumerate() {
            if yi == 1 && yj == 0 {
                den += 1.0;
                num += if s[i] > s[j] {
                    1.0
                } else if s[i] == s[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    num / den
}

/// Naive Bayes evaluated with plain probabilities and explicit products.
pub fn brute_force_nb(train: &[[u32; 3]], y: &[u8], alpha: f64, doc: &[u32; 3]) -> u8 {
    let mut post = [0.0f64; 2];
    for c in 0..2u8 {
        let members: Vec<&[u32; 3]> =
            train.iter().zip(y).filter(|(_, &l)| l == c).map(|(r, _)| r).collect();
        let prior = members.len() as f64 / train.len() as f64;
        let mut counts = [0.0; 3];
        for r in &members {
            for t in 0..3 {
                counts[t] += r[t] as f64;
            }
        }
        let total: f64 = counts.iter().sum();
        let mut p = prior;
        for t in 0..3 {
            let theta = (counts[t] + alpha) / (total + alpha * 3.0);
            for _ in 0..doc[t] {
                p *= theta;
            }
        }
        post[c as usize] = p;
    }
    u8::from(post[1] > post[0])
}

/// Every count vector over 3 terms with counts at most 2.
pub fn all_small_docs() -> Vec<[u32; 3]> {
    let mut v = Vec::new();
    for a in 0..=2 {
        for b in 0..=2 {
            for c in 0..=2 {
                v.push([a, b, c]);
            }
        }
    }
    v
}

pub fn to_matrix(rows: &[[u32; 3]]) -> SparseMatrix {
    SparseMatrix::new(
        rows.iter()
            .map(|r| SparseVector::from_pairs(r.iter().enumerate().map(|(i, &c)| (i, c as f64))))
            .collect(),
        3,
    )
    .unwrap()
}

/// TF-IDF of `query` for every term seen in `docs`: in-vocabulary count over
/// in-vocabulary length, times ln(n_docs / df).
pub fn direct_tfidf(docs: &[Vec<String>], query: &[String]) -> HashMap<String, f64> {
    let n = docs.len() as f64;
    let mut df: HashMap<&str, f64> = HashMap::new();
    for d in docs {
        let mut seen: Vec<&str> = d.iter().map(String::as_str).collect();
        seen.sort();
        seen.dedup();
        for t in seen {
            *df.entry(t).or_default() += 1.0;
        }
    }
    let in_vocab: Vec<&str> = query.iter().map(String::as_str).filter(|t| df.contains_key(t)).collect();
    let total = in_vocab.len() as f64;
    df.iter()
        .map(|(term, &d)| {
            let count = in_vocab.iter().filter(|t| *t == term).count() as f64;
            let v = if total == 0.0 { 0.0 } else { count / total * (n / d).ln() };
            (term.to_string(), v)
        })
        .collect()
}
