//! Encoder contract and the in-repo bag-of-words encoder.

use std::collections::HashMap;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed;

#[derive(Debug, Clone, Error, PartialEq)]
#[error("{0}")]
pub struct EncoderError(pub String);

/// Maps text to a non-empty sequence of `dim`-dimensional vectors.
///
/// Implementations must be deterministic for fixed parameters.
pub trait Encoder: Send + Sync {
    fn name(&self) -> &str;
    fn version(&self) -> &str;
    fn dim(&self) -> usize;
    fn encode(&self, text: &str) -> Result<Vec<Vec<f64>>, EncoderError>;

    /// Learning rate suited to the scale of this encoder's features.
    fn recommended_lr(&self) -> Option<f64> {
        None
    }

    /// Parameters to embed in a checkpoint, if the encoder is self-contained.
    fn export(&self) -> Option<serde_json::Value> {
        None
    }

    fn supports_concurrency(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BowConfig {
    /// Word vector dimension.
    pub dim: usize,
    pub max_vocab: usize,
    pub min_count: usize,
    /// Segment separator expected in encoder inputs.
    pub separator: String,
    /// Inputs longer than this keep their first `max_tokens` tokens.
    pub max_tokens: usize,
    pub seed: u64,
}

impl Default for BowConfig {
    fn default() -> Self {
        Self {
            dim: 8,
            max_vocab: 2000,
            min_count: 2,
            separator: super::DEFAULT_SEPARATOR.to_string(),
            max_tokens: 256,
            seed: 0,
        }
    }
}

/// Bag-of-words encoder with word vectors fitted from utterance co-occurrence.
///
/// Word vectors are the leading eigenvectors of the positive PMI matrix of
/// within-utterance co-occurrence, L2-normalized per word. An input with up to
/// three separator-delimited segments yields one vector per segment; after mean
/// pooling the classifier sees the segment means `m_0, m_1, m_2` and their
/// pairwise outer products `m_0 m_1^T, m_0 m_2^T, m_1 m_2^T`, all scaled by
/// `1 / n_segments`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BagOfWordsEncoder {
    config: BowConfig,
    vocab: Vec<String>,
    vectors: Vec<Vec<f64>>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

pub const BOW_NAME: &str = "bow-ppmi";
pub const BOW_VERSION: &str = "1";
const SEGMENTS: usize = 3;
const FULL_EIGEN_LIMIT: usize = 600;

pub fn normalize_token(tok: &str) -> String {
    tok.trim_matches(|c: char| c.is_ascii_punctuation()).to_lowercase()
}

fn doc_tokens(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(normalize_token)
        .filter(|t| !t.is_empty())
        .collect()
}

impl BagOfWordsEncoder {
    pub fn fit<'a>(texts: impl IntoIterator<Item = &'a str>, config: BowConfig) -> Self {
        let docs: Vec<Vec<String>> = texts.into_iter().map(doc_tokens).collect();
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for d in &docs {
            for t in d {
                *counts.entry(t.as_str()).or_insert(0) += 1;
            }
        }
        let mut ranked: Vec<(&str, usize)> = counts.into_iter().filter(|&(_, c)| c >= config.min_count).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        ranked.truncate(config.max_vocab);
        let vocab: Vec<String> = ranked.iter().map(|(w, _)| w.to_string()).collect();
        let index: HashMap<String, usize> = vocab.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();

        let v = vocab.len();
        let mut cooc = DMatrix::<f64>::zeros(v, v);
        for d in &docs {
            let mut ids: Vec<usize> = d.iter().filter_map(|t| index.get(t).copied()).collect();
            ids.sort_unstable();
            ids.dedup();
            for (k, &a) in ids.iter().enumerate() {
                for &b in &ids[k + 1..] {
                    cooc[(a, b)] += 1.0;
                    cooc[(b, a)] += 1.0;
                }
            }
        }
        let vectors = ppmi_vectors(&cooc, config.dim, config.seed);
        Self {
            config,
            vocab,
            vectors,
            index,
        }
    }

    pub fn from_json(value: serde_json::Value) -> Result<Self, EncoderError> {
        let mut enc: Self = serde_json::from_value(value).map_err(|e| EncoderError(e.to_string()))?;
        if enc.vocab.len() != enc.vectors.len() || enc.vectors.iter().any(|v| v.len() != enc.config.dim) {
            return Err(EncoderError("inconsistent vocabulary and vectors".into()));
        }
        enc.index = enc.vocab.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Ok(enc)
    }

    pub fn config(&self) -> &BowConfig {
        &self.config
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn word_vector(&self, word: &str) -> Option<&[f64]> {
        self.index
            .get(&normalize_token(word))
            .map(|&i| self.vectors[i].as_slice())
    }

    fn segment_mean(&self, tokens: &[String]) -> Vec<f64> {
        let d = self.config.dim;
        let mut m = vec![0.0; d];
        let mut n = 0usize;
        for t in tokens {
            if let Some(&i) = self.index.get(t) {
                for (a, b) in m.iter_mut().zip(&self.vectors[i]) {
                    *a += b;
                }
                n += 1;
            }
        }
        if n > 0 {
            for a in &mut m {
                *a /= n as f64;
            }
        }
        m
    }

    fn segments(&self, text: &str) -> Vec<Vec<String>> {
        let raw: Vec<&str> = if self.config.separator.is_empty() {
            vec![text]
        } else {
            text.split(self.config.separator.as_str()).collect()
        };
        let mut segs: Vec<Vec<String>> = raw.iter().map(|s| doc_tokens(s)).collect();
        while segs.len() > SEGMENTS {
            let last = segs.pop().unwrap();
            segs.last_mut().unwrap().extend(last);
        }
        let mut budget = self.config.max_tokens;
        for s in &mut segs {
            let keep = s.len().min(budget);
            s.truncate(keep);
            budget -= keep;
        }
        segs
    }
}

impl Encoder for BagOfWordsEncoder {
    fn name(&self) -> &str {
        BOW_NAME
    }

    fn version(&self) -> &str {
        BOW_VERSION
    }

    fn dim(&self) -> usize {
        let d = self.config.dim;
        SEGMENTS * d + 3 * d * d
    }

    fn encode(&self, text: &str) -> Result<Vec<Vec<f64>>, EncoderError> {
        let d = self.config.dim;
        let segs = self.segments(text);
        let means: Vec<Vec<f64>> = segs.iter().map(|s| self.segment_mean(s)).collect();
        let mut out = vec![vec![0.0; self.dim()]; means.len().max(1)];
        let mut cross = 0;
        for a in 0..SEGMENTS {
            if let Some(ma) = means.get(a) {
                out[a][a * d..(a + 1) * d].copy_from_slice(ma);
            }
            for b in a + 1..SEGMENTS {
                if let (Some(ma), Some(mb)) = (means.get(a), means.get(b)) {
                    let base = SEGMENTS * d + cross * d * d;
                    for (x, va) in ma.iter().enumerate() {
                        for (y, vb) in mb.iter().enumerate() {
                            out[a][base + x * d + y] = va * vb;
                        }
                    }
                }
                cross += 1;
            }
        }
        Ok(out)
    }

    fn recommended_lr(&self) -> Option<f64> {
        Some(0.2)
    }

    fn export(&self) -> Option<serde_json::Value> {
        serde_json::to_value(self).ok()
    }
}

/// Rows of the leading `dim` eigenvectors of the PPMI matrix, scaled by the
/// square root of the eigenvalue magnitude and L2-normalized.
fn ppmi_vectors(cooc: &DMatrix<f64>, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let v = cooc.nrows();
    if v == 0 {
        return Vec::new();
    }
    let row: Vec<f64> = (0..v).map(|i| cooc.row(i).sum()).collect();
    let total: f64 = row.iter().sum();
    let mut ppmi = DMatrix::<f64>::zeros(v, v);
    if total > 0.0 {
        for a in 0..v {
            for b in 0..v {
                let c = cooc[(a, b)];
                if c > 0.0 {
                    let pmi = (c * total / (row[a] * row[b])).ln();
                    ppmi[(a, b)] = pmi.max(0.0);
                }
            }
        }
    }
    let (values, vecs) = leading_eigen(&ppmi, dim.min(v), seed);
    let mut out = Vec::with_capacity(v);
    for i in 0..v {
        let mut w: Vec<f64> = (0..dim)
            .map(|k| {
                if k < values.len() {
                    vecs[(i, k)] * values[k].abs().sqrt()
                } else {
                    0.0
                }
            })
            .collect();
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            for x in &mut w {
                *x /= norm;
            }
        } else {
            w.iter_mut().for_each(|x| *x = 0.0);
        }
        out.push(w);
    }
    out
}

/// Eigenpairs with the `k` largest magnitudes, sorted descending, with a
/// deterministic sign (largest-magnitude component positive).
fn leading_eigen(m: &DMatrix<f64>, k: usize, seed: u64) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let (values, vectors) = if n <= FULL_EIGEN_LIMIT {
        let eig = SymmetricEigen::new(m.clone());
        (eig.eigenvalues.iter().copied().collect::<Vec<_>>(), eig.eigenvectors)
    } else {
        subspace_iteration(m, (k + 8).min(n), seed)
    };
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].abs().partial_cmp(&values[a].abs()).unwrap().then(a.cmp(&b)));
    order.truncate(k);
    let mut out = DMatrix::<f64>::zeros(n, k);
    let mut vals = Vec::with_capacity(k);
    for (c, &i) in order.iter().enumerate() {
        let col = vectors.column(i);
        let pivot = col
            .iter()
            .copied()
            .fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for r in 0..n {
            out[(r, c)] = col[r] * sign;
        }
        vals.push(values[i]);
    }
    (vals, out)
}

fn subspace_iteration(m: &DMatrix<f64>, k: usize, seed: u64) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let mut rng = seed::rng(seed, "encoder", &[]);
    let mut q = DMatrix::<f64>::from_fn(n, k, |_, _| rng.random::<f64>() - 0.5);
    for _ in 0..60 {
        let z = m * &q;
        q = z.qr().q();
    }
    let small = q.transpose() * m * &q;
    let eig = SymmetricEigen::new(small);
    let vecs = &q * eig.eigenvectors;
    (eig.eigenvalues.iter().copied().collect(), vecs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> BagOfWordsEncoder {
        let mut texts = Vec::new();
        for _ in 0..5 {
            texts.push("red apple cherry".to_string());
            texts.push("apple cherry red".to_string());
            texts.push("blue sky ocean".to_string());
            texts.push("ocean sky blue".to_string());
        }
        BagOfWordsEncoder::fit(
            texts.iter().map(|s| s.as_str()),
            BowConfig {
                dim: 2,
                min_count: 1,
                ..Default::default()
            },
        )
    }

    #[test]
    fn clusters_separate() {
        let enc = toy();
        let dot = |a: &str, b: &str| -> f64 {
            let (x, y) = (enc.word_vector(a).unwrap(), enc.word_vector(b).unwrap());
            x.iter().zip(y).map(|(p, q)| p * q).sum()
        };
        assert!(dot("red", "apple") > 0.9);
        assert!(dot("red", "ocean").abs() < 0.1);
    }

    #[test]
    fn one_vector_per_segment() {
        let enc = toy();
        let out = enc.encode("red apple </s> sky </s> cherry").unwrap();
        assert_eq!(out.len(), 3);
        assert!(out.iter().all(|v| v.len() == enc.dim()));
        assert_eq!(enc.encode("").unwrap().len(), 1);
        assert_eq!(enc.encode("Red, APPLE!").unwrap(), enc.encode("red apple").unwrap());
    }

    #[test]
    fn json_round_trip() {
        let enc = toy();
        let back = BagOfWordsEncoder::from_json(enc.export().unwrap()).unwrap();
        assert_eq!(back.encode("red sky").unwrap(), enc.encode("red sky").unwrap());
    }
}
