//! Constrained incremental self-training of the CI classifier.
//!
//! Starting from a classifier trained on labeled pairs, each round scores every
//! candidate triple of the unlabeled pool, keeps as pseudo-positives those with
//! score above the threshold whose `j` lies in the context window, adds an equal
//! number of randomly sampled pseudo-negatives, and fine-tunes on the grown
//! dataset. Rounds stop when validation F1 stops improving.
//!
//! Variants: [`Variant::Constrain`] (threshold and window), [`Variant::Ist`]
//! (threshold only), [`Variant::Fc`] (a single pass, then one fine-tuning
//! round) and [`Variant::Init`] (labeled data only).

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ci::{
    build_supervised_set, candidate_triples, evaluate_features, train_features, BatchLog, CiClassifier, CiError,
    FeatureSet, Head, LabeledTriple, Origin, TrainConfig, Triple,
};
use crate::corpus::{Corpus, HistoryResponsePair, PairKey};
use crate::metrics::Prf;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Constrain,
    Init,
    Fc,
    Ist,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Constrain => "constrain",
            Variant::Init => "init",
            Variant::Fc => "fc",
            Variant::Ist => "ist",
        }
    }

    pub fn uses_window(self) -> bool {
        matches!(self, Variant::Constrain | Variant::Fc)
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "constrain" => Ok(Variant::Constrain),
            "init" => Ok(Variant::Init),
            "fc" => Ok(Variant::Fc),
            "ist" => Ok(Variant::Ist),
            other => Err(format!("unknown variant {other:?}")),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfTrainConfig {
    pub threshold: f64,
    /// Allowed offsets `t - j` of pseudo-positives.
    pub context_window: BTreeSet<usize>,
    pub variant: Variant,
    pub max_iterations: usize,
    pub epochs_per_iteration: usize,
    /// Non-improving rounds tolerated before stopping.
    pub patience: usize,
    pub seed: u64,
    /// Optimizer settings; `train.epochs` applies to the initial supervised round.
    pub train: TrainConfig,
}

impl Default for SelfTrainConfig {
    fn default() -> Self {
        Self {
            threshold: 0.9,
            context_window: BTreeSet::from([2, 3]),
            variant: Variant::Constrain,
            max_iterations: 5,
            epochs_per_iteration: 10,
            patience: 1,
            seed: 0,
            train: TrainConfig::default(),
        }
    }
}

impl SelfTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(ConstrainError::Config(format!(
                "threshold {} must lie in (0, 1)",
                self.threshold
            )));
        }
        if self.variant.uses_window() && self.context_window.is_empty() {
            return Err(ConstrainError::Config(format!(
                "variant {} needs a non-empty context window",
                self.variant
            )));
        }
        if self.context_window.iter().any(|&k| k < 2) {
            return Err(ConstrainError::Config(
                "context window offsets must be at least 2".into(),
            ));
        }
        if self.patience == 0 {
            return Err(ConstrainError::Config("patience must be at least 1".into()));
        }
        Ok(())
    }

    /// Whether a scored candidate passes this variant's constraints.
    pub fn accepts(&self, j: usize, t: usize, score: f64) -> bool {
        score > self.threshold && (!self.variant.uses_window() || self.context_window.contains(&(t - j)))
    }
}

#[derive(Debug, Error)]
pub enum ConstrainError {
    #[error(transparent)]
    Ci(#[from] CiError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("labeled and unlabeled pairs overlap at {0}")]
    Overlap(PairKey),
    #[error("no eligible negative candidates")]
    NoEligibleCandidates,
    #[error("validation F1 fell below half its initial value for 2 consecutive rounds")]
    Diverged { trace: Vec<IterationRecord> },
}

pub type Result<T, E = ConstrainError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoPositive {
    pub dialogue_id: String,
    pub t: usize,
    pub j: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub n_pseudo_positives: usize,
    pub n_negatives: usize,
    pub dataset_size: usize,
    pub valid: Prf,
    /// Negatives had to be drawn with replacement.
    pub resampled: bool,
    pub best_epoch: usize,
    pub pseudo_positives: Vec<PseudoPositive>,
    pub batches: Vec<BatchLog>,
}

#[derive(Debug, Clone)]
pub struct SelfTrainOutcome {
    pub classifier: CiClassifier,
    pub trace: Vec<IterationRecord>,
    /// Head after every round, index = iteration.
    pub heads: Vec<Head>,
    pub best_iteration: usize,
}

type CandidateKey = (String, usize, usize);

fn key_of(t: &Triple) -> CandidateKey {
    (t.dialogue_id.clone(), t.t, t.j)
}

/// Candidates passing the variant's constraints, as pseudo-positives with
/// their scores.
pub fn select_pseudo_positives(
    candidates: &[Triple],
    scores: &[f64],
    config: &SelfTrainConfig,
) -> Vec<(LabeledTriple, f64)> {
    candidates
        .iter()
        .zip(scores)
        .filter(|(c, &s)| config.accepts(c.j, c.t, s))
        .map(|(c, &s)| {
            (
                LabeledTriple {
                    triple: c.clone(),
                    label: true,
                    origin: Origin::Pseudo,
                },
                s,
            )
        })
        .collect()
}

/// Scores every candidate triple of `unlabeled` and selects pseudo-positives.
pub fn select_from_pool(
    clf: &CiClassifier,
    unlabeled: &[HistoryResponsePair],
    corpus: &Corpus,
    config: &SelfTrainConfig,
) -> Result<Vec<(LabeledTriple, f64)>> {
    let mut candidates = Vec::new();
    for p in unlabeled {
        candidates.extend(candidate_triples(p, corpus)?);
    }
    let refs: Vec<&Triple> = candidates.iter().collect();
    let scores = clf.score_batch(&refs)?;
    Ok(select_pseudo_positives(&candidates, &scores, config))
}

#[derive(Debug, Clone, PartialEq)]
pub struct NegativeSample {
    pub negatives: Vec<LabeledTriple>,
    pub resampled: bool,
}

/// Uniform sample of `count` candidates outside `exclude`, labeled negative.
///
/// Draws without replacement when enough candidates are eligible and with
/// replacement (flagged) otherwise.
pub fn sample_negatives(
    candidates: &[Triple],
    exclude: &HashSet<CandidateKey>,
    count: usize,
    run_seed: u64,
    round: usize,
) -> Result<NegativeSample> {
    let eligible: Vec<&Triple> = candidates.iter().filter(|c| !exclude.contains(&key_of(c))).collect();
    if count == 0 {
        return Ok(NegativeSample {
            negatives: Vec::new(),
            resampled: false,
        });
    }
    if eligible.is_empty() {
        return Err(ConstrainError::NoEligibleCandidates);
    }
    let mut rng = seed::rng(run_seed, seed::NEGATIVES, &[&round.to_string()]);
    let (picked, resampled): (Vec<usize>, bool) = if count <= eligible.len() {
        (sample(&mut rng, eligible.len(), count).into_vec(), false)
    } else {
        ((0..count).map(|_| rng.random_range(0..eligible.len())).collect(), true)
    };
    Ok(NegativeSample {
        negatives: picked
            .into_iter()
            .map(|i| LabeledTriple {
                triple: eligible[i].clone(),
                label: false,
                origin: Origin::Pseudo,
            })
            .collect(),
        resampled,
    })
}

/// Runs the configured variant from `base` (usually a zero-initialized head).
pub fn self_train(
    base: &CiClassifier,
    corpus: &Corpus,
    labeled_train: &[HistoryResponsePair],
    labeled_valid: &[HistoryResponsePair],
    unlabeled: &[HistoryResponsePair],
    config: &SelfTrainConfig,
) -> Result<SelfTrainOutcome> {
    config.validate()?;
    let labeled: HashSet<PairKey> = labeled_train.iter().chain(labeled_valid).map(|p| p.key()).collect();
    if let Some(p) = unlabeled.iter().find(|p| labeled.contains(&p.key())) {
        return Err(ConstrainError::Overlap(p.key()));
    }

    let mut clf = base.clone();
    let train_set = build_supervised_set(labeled_train, corpus)?;
    let valid_set = build_supervised_set(labeled_valid, corpus)?;
    let mut train_fs = FeatureSet::from_triples(&clf, &train_set)?;
    let valid_fs = FeatureSet::from_triples(&clf, &valid_set)?;

    let mut train_cfg = config.train.clone();
    train_cfg.seed = config.seed;
    let report = train_features(&mut clf, &train_fs, &valid_fs, &train_cfg, 0)?;
    let eval_fs = if valid_fs.is_empty() { &train_fs } else { &valid_fs };
    let f1_of = |head: &Head, fs: &FeatureSet| Prf::from(&evaluate_features(head, fs).0);
    let valid0 = f1_of(&clf.head, eval_fs);
    let mut trace = vec![IterationRecord {
        iteration: 0,
        n_pseudo_positives: 0,
        n_negatives: 0,
        dataset_size: train_fs.len(),
        valid: valid0,
        resampled: false,
        best_epoch: report.best_epoch,
        pseudo_positives: Vec::new(),
        batches: report.batches,
    }];
    let mut heads = vec![clf.head.clone()];
    let rounds = match config.variant {
        Variant::Init => 0,
        Variant::Fc => config.max_iterations.min(1),
        Variant::Constrain | Variant::Ist => config.max_iterations,
    };

    let mut candidates = Vec::new();
    if rounds > 0 {
        for p in unlabeled {
            candidates.extend(candidate_triples(p, corpus)?);
        }
    }
    let cand_refs: Vec<&Triple> = candidates.iter().collect();
    let cand_fs = if rounds > 0 {
        clf.features_batch(&cand_refs)?
    } else {
        Vec::new()
    };

    let mut used: HashSet<CandidateKey> = HashSet::new();
    let mut best = (0usize, valid0.f1);
    let mut stale = 0usize;
    let mut low = 0usize;
    for round in 1..=rounds {
        let scores: Vec<f64> = cand_fs.par_iter().map(|f| clf.score_features(f)).collect();
        let fresh: Vec<usize> = (0..candidates.len())
            .filter(|&i| {
                !used.contains(&key_of(&candidates[i])) && config.accepts(candidates[i].j, candidates[i].t, scores[i])
            })
            .collect();
        if fresh.is_empty() {
            log::info!("round {round}: no new pseudo-positives, stopping");
            break;
        }
        let mut exclude = used.clone();
        exclude.extend(fresh.iter().map(|&i| key_of(&candidates[i])));
        let neg = sample_negatives(&candidates, &exclude, fresh.len(), config.seed, round)?;

        let mut pseudo_positives = Vec::with_capacity(fresh.len());
        for &i in &fresh {
            let c = &candidates[i];
            used.insert(key_of(c));
            train_fs.push(cand_fs[i].clone(), true);
            pseudo_positives.push(PseudoPositive {
                dialogue_id: c.dialogue_id.clone(),
                t: c.t,
                j: c.j,
                score: scores[i],
            });
        }
        let index: std::collections::HashMap<CandidateKey, usize> =
            candidates.iter().enumerate().map(|(i, c)| (key_of(c), i)).collect();
        for n in &neg.negatives {
            let k = key_of(&n.triple);
            train_fs.push(cand_fs[index[&k]].clone(), false);
            used.insert(k);
        }

        let mut cfg = train_cfg.clone();
        cfg.epochs = config.epochs_per_iteration;
        let report = train_features(&mut clf, &train_fs, &valid_fs, &cfg, round)?;
        let eval_fs = if valid_fs.is_empty() { &train_fs } else { &valid_fs };
        let valid = f1_of(&clf.head, eval_fs);
        trace.push(IterationRecord {
            iteration: round,
            n_pseudo_positives: fresh.len(),
            n_negatives: neg.negatives.len(),
            dataset_size: train_fs.len(),
            valid,
            resampled: neg.resampled,
            best_epoch: report.best_epoch,
            pseudo_positives,
            batches: report.batches,
        });
        heads.push(clf.head.clone());
        log::info!(
            "round {round}: +{} pseudo-positives, dataset {}, valid F1 {:.4}",
            fresh.len(),
            train_fs.len(),
            valid.f1
        );

        if valid.f1 < 0.5 * valid0.f1 {
            low += 1;
            if low >= 2 {
                return Err(ConstrainError::Diverged { trace });
            }
        } else {
            low = 0;
        }
        if config.variant == Variant::Fc {
            best = (round, valid.f1);
            break;
        }
        if valid.f1 > best.1 {
            best = (round, valid.f1);
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }
    clf.head = heads[best.0].clone();
    Ok(SelfTrainOutcome {
        classifier: clf,
        trace,
        heads,
        best_iteration: best.0,
    })
}
