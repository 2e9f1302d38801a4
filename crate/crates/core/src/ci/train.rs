//! Supervised training of the classifier head (encoder frozen).

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{CiClassifier, CiError, Head, LabeledTriple, Result};
use crate::metrics::{Confusion, Prf};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    /// Even; each batch holds `batch_size / 2` examples of each class.
    pub batch_size: usize,
    pub seed: u64,
    pub shuffle: bool,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    #[serde(default)]
    pub balance: Balance,
}

/// How each epoch equalizes the classes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Balance {
    /// A fresh random subset of the majority class, the size of the minority.
    #[default]
    Downsample,
    /// The minority class repeated cyclically up to the majority size.
    Upsample,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 2e-5,
            epochs: 10,
            batch_size: 16,
            seed: 0,
            shuffle: true,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            balance: Balance::default(),
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(CiError::Config(format!("learning rate {} must be positive", self.lr)));
        }
        if self.batch_size < 2 || self.batch_size % 2 != 0 {
            return Err(CiError::Config(format!(
                "batch size {} must be even and at least 2",
                self.batch_size
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchLog {
    pub epoch: usize,
    pub batch: usize,
    pub n_pos: usize,
    pub n_neg: usize,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid: Prf,
    pub valid_loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochLog>,
    pub batches: Vec<BatchLog>,
    pub best_epoch: usize,
    pub best_valid: Prf,
}

/// Mean binary cross-entropy of `head` over a batch and its gradient.
pub fn bce_loss_and_grad(head: &Head, features: &[&[f64]], labels: &[bool]) -> (f64, Vec<f64>, f64) {
    let mut grad_w = vec![0.0; head.weights.len()];
    let mut grad_b = 0.0;
    let mut loss = 0.0;
    let n = features.len().max(1) as f64;
    for (f, &y) in features.iter().zip(labels) {
        let z = head.logit(f);
        let y = if y { 1.0 } else { 0.0 };
        loss += z.max(0.0) + (-z.abs()).exp().ln_1p() - y * z;
        let g = 1.0 / (1.0 + (-z).exp()) - y;
        for (gw, x) in grad_w.iter_mut().zip(f.iter()) {
            *gw += g * x;
        }
        grad_b += g;
    }
    grad_w.iter_mut().for_each(|g| *g /= n);
    (loss / n, grad_w, grad_b / n)
}

/// Precomputed features with labels.
#[derive(Debug, Clone, Default)]
pub struct FeatureSet {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<bool>,
}

impl FeatureSet {
    pub fn from_triples(clf: &CiClassifier, data: &[LabeledTriple]) -> Result<Self> {
        let triples: Vec<_> = data.iter().map(|l| &l.triple).collect();
        Ok(Self {
            features: clf.features_batch(&triples)?,
            labels: data.iter().map(|l| l.label).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn push(&mut self, features: Vec<f64>, label: bool) {
        self.features.push(features);
        self.labels.push(label);
    }
}

/// Confusion at threshold 0.5 and mean loss of `head` on `set`.
pub fn evaluate_features(head: &Head, set: &FeatureSet) -> (Confusion, f64) {
    let mut c = Confusion::default();
    let mut loss = 0.0;
    for (f, &y) in set.features.iter().zip(&set.labels) {
        let z = head.logit(f);
        c.add(super::sigmoid(z) > 0.5, y);
        loss += z.max(0.0) + (-z.abs()).exp().ln_1p() - if y { z } else { 0.0 };
    }
    (c, loss / set.len().max(1) as f64)
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    fn update(&mut self, params: &mut [f64], grads: &[f64], cfg: &TrainConfig) {
        self.step += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.step);
        let bc2 = 1.0 - cfg.beta2.powi(self.step);
        for i in 0..params.len() {
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * grads[i];
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
            let mh = self.m[i] / bc1;
            let vh = self.v[i] / bc2;
            params[i] -= cfg.lr * mh / (vh.sqrt() + cfg.eps);
        }
    }
}

/// `idx` repeated cyclically, or truncated, to `len`.
fn cycle_to(idx: &[usize], len: usize) -> Vec<usize> {
    idx.iter().copied().cycle().take(len).collect()
}

/// Trains on precomputed features; `round` separates the batching streams of
/// successive calls sharing a seed.
pub fn train_features(
    clf: &mut CiClassifier,
    train: &FeatureSet,
    valid: &FeatureSet,
    config: &TrainConfig,
    round: usize,
) -> Result<TrainReport> {
    config.validate()?;
    let pos: Vec<usize> = (0..train.len()).filter(|&i| train.labels[i]).collect();
    let neg: Vec<usize> = (0..train.len()).filter(|&i| !train.labels[i]).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(CiError::SingleClassData(format!(
            "{} positive, {} negative",
            pos.len(),
            neg.len()
        )));
    }
    let dim = clf.head.weights.len();
    let mut params: Vec<f64> = clf.head.weights.iter().copied().chain([clf.head.bias]).collect();
    let mut adam = Adam::new(dim + 1);
    let half = config.batch_size / 2;
    let per_class = match config.balance {
        Balance::Upsample => pos.len().max(neg.len()),
        Balance::Downsample => pos.len().min(neg.len()),
    };
    let eval_set = if valid.is_empty() { train } else { valid };
    let round_str = round.to_string();

    let mut report = TrainReport::default();
    let mut best: Option<(f64, f64, Head)> = None;
    for epoch in 0..config.epochs {
        let (mut p, mut n) = (pos.clone(), neg.clone());
        if config.shuffle {
            let e = epoch.to_string();
            let mut rng = seed::rng(config.seed, seed::BATCHING, &[&round_str, &e]);
            p.shuffle(&mut rng);
            n.shuffle(&mut rng);
        }
        let p = cycle_to(&p, per_class);
        let n = cycle_to(&n, per_class);
        let mut epoch_loss = 0.0;
        let mut n_batches = 0;
        for (b, start) in (0..per_class).step_by(half).enumerate() {
            let end = (start + half).min(per_class);
            let idx: Vec<usize> = p[start..end].iter().chain(&n[start..end]).copied().collect();
            let feats: Vec<&[f64]> = idx.iter().map(|&i| train.features[i].as_slice()).collect();
            let labels: Vec<bool> = idx.iter().map(|&i| train.labels[i]).collect();
            let head = Head {
                weights: params[..dim].to_vec(),
                bias: params[dim],
            };
            let (loss, gw, gb) = bce_loss_and_grad(&head, &feats, &labels);
            let grads: Vec<f64> = gw.into_iter().chain([gb]).collect();
            adam.update(&mut params, &grads, config);
            report.batches.push(BatchLog {
                epoch,
                batch: b,
                n_pos: end - start,
                n_neg: end - start,
                loss,
            });
            epoch_loss += loss;
            n_batches += 1;
        }
        let head = Head {
            weights: params[..dim].to_vec(),
            bias: params[dim],
        };
        let (c, valid_loss) = evaluate_features(&head, eval_set);
        let prf = Prf::from(&c);
        report.epochs.push(EpochLog {
            epoch,
            train_loss: epoch_loss / n_batches as f64,
            valid: prf,
            valid_loss,
        });
        let better = match &best {
            None => true,
            Some((f1, loss, _)) => prf.f1 > *f1 || (prf.f1 == *f1 && valid_loss < *loss),
        };
        if better {
            report.best_epoch = epoch;
            report.best_valid = prf;
            best = Some((prf.f1, valid_loss, head));
        }
    }
    if let Some((_, _, head)) = best {
        clf.head = head;
    }
    clf.epochs_trained += config.epochs;
    Ok(report)
}

/// Trains the head with balanced batches and keeps the best-validation epoch.
///
/// Validation F1 at threshold 0.5 selects the epoch (lower validation loss
/// breaks ties); without validation data the training set is used.
pub fn train_supervised(
    clf: &mut CiClassifier,
    train: &[LabeledTriple],
    valid: &[LabeledTriple],
    config: &TrainConfig,
) -> Result<TrainReport> {
    let train_fs = FeatureSet::from_triples(clf, train)?;
    let valid_fs = FeatureSet::from_triples(clf, valid)?;
    train_features(clf, &train_fs, &valid_fs, config, 0)
}
