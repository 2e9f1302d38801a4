use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{build_input, join_segments, CiError, Encoder, Result, Triple};

/// Logits are clamped to this magnitude so scores stay strictly inside (0, 1).
pub const LOGIT_CLAMP: f64 = 30.0;

pub fn sigmoid(z: f64) -> f64 {
    let z = z.clamp(-LOGIT_CLAMP, LOGIT_CLAMP);
    1.0 / (1.0 + (-z).exp())
}

/// What the classifier conditions on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    /// `response SEP u_prev SEP u_j`: dependence of `r_t` on `u_j` given `u_{t-1}`.
    ConditionalIndependence,
    /// `response SEP u_j`: marginal dependence, no conditioning utterance.
    Dependence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Head {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl Head {
    pub fn zeros(dim: usize) -> Self {
        Self {
            weights: vec![0.0; dim],
            bias: 0.0,
        }
    }

    pub fn logit(&self, features: &[f64]) -> f64 {
        self.weights.iter().zip(features).map(|(w, f)| w * f).sum::<f64>() + self.bias
    }

    pub fn is_finite(&self) -> bool {
        self.bias.is_finite() && self.weights.iter().all(|w| w.is_finite())
    }
}

/// Frozen encoder, mean pooling, linear layer, sigmoid.
#[derive(Clone)]
pub struct CiClassifier {
    pub encoder: Arc<dyn Encoder>,
    pub head: Head,
    pub separator: String,
    pub kind: ClassifierKind,
    /// Epochs of training applied so far.
    pub epochs_trained: usize,
}

impl std::fmt::Debug for CiClassifier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CiClassifier")
            .field(
                "encoder",
                &format!("{}@{}", self.encoder.name(), self.encoder.version()),
            )
            .field("kind", &self.kind)
            .field("dim", &self.head.weights.len())
            .field("epochs_trained", &self.epochs_trained)
            .finish()
    }
}

impl CiClassifier {
    /// Zero-initialized head over `encoder`.
    pub fn new(encoder: Arc<dyn Encoder>, separator: impl Into<String>, kind: ClassifierKind) -> Self {
        let dim = encoder.dim();
        Self {
            encoder,
            head: Head::zeros(dim),
            separator: separator.into(),
            kind,
            epochs_trained: 0,
        }
    }

    pub fn input(&self, triple: &Triple) -> String {
        match self.kind {
            ClassifierKind::ConditionalIndependence => build_input(triple, &self.separator),
            ClassifierKind::Dependence => join_segments(&[&triple.response, &triple.u_j], &self.separator),
        }
    }

    /// Mean-pooled encoder output for one triple.
    pub fn features(&self, triple: &Triple) -> Result<Vec<f64>> {
        let vectors = self
            .encoder
            .encode(&self.input(triple))
            .map_err(|source| CiError::Encoder {
                context: triple.describe(),
                source,
            })?;
        let dim = self.encoder.dim();
        if vectors.is_empty() || vectors.iter().any(|v| v.len() != dim) {
            return Err(CiError::Encoder {
                context: triple.describe(),
                source: super::EncoderError(format!("expected a non-empty sequence of {dim}-dim vectors")),
            });
        }
        let mut pooled = vec![0.0; dim];
        for v in &vectors {
            for (p, x) in pooled.iter_mut().zip(v) {
                *p += x;
            }
        }
        let n = vectors.len() as f64;
        pooled.iter_mut().for_each(|p| *p /= n);
        Ok(pooled)
    }

    /// Features of many triples, in parallel when the encoder allows it.
    pub fn features_batch(&self, triples: &[&Triple]) -> Result<Vec<Vec<f64>>> {
        if self.encoder.supports_concurrency() {
            triples.par_iter().map(|t| self.features(t)).collect()
        } else {
            triples.iter().map(|t| self.features(t)).collect()
        }
    }

    pub fn score_features(&self, features: &[f64]) -> f64 {
        sigmoid(self.head.logit(features))
    }

    /// `p(l = 1 | u_j, u_{t-1}, r_t)`, strictly inside (0, 1).
    pub fn score(&self, triple: &Triple) -> Result<f64> {
        Ok(self.score_features(&self.features(triple)?))
    }

    pub fn score_batch(&self, triples: &[&Triple]) -> Result<Vec<f64>> {
        Ok(self
            .features_batch(triples)?
            .iter()
            .map(|f| self.score_features(f))
            .collect())
    }
}
