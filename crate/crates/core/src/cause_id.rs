//! Direct-cause identification: `u_{t-1}` always, plus the highest-scoring
//! earlier utterance when the CI classifier is confident enough.

use std::collections::{BTreeSet, HashMap};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ci::{CiClassifier, CiError, Triple};
use crate::corpus::{Corpus, HistoryResponsePair, PairKey, Utterance};
use crate::metrics::{Confusion, Prf};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum CauseIdError {
    #[error("no candidate cause before u_{{t-1}} (t = {0})")]
    NoCandidates(usize),
    #[error(transparent)]
    Ci(#[from] CiError),
    #[error("predictions and gold pairs are misaligned: {0}")]
    MisalignedInputs(String),
}

pub type Result<T, E = CauseIdError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecondCause {
    pub j: usize,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausePrediction {
    pub dialogue_id: String,
    pub t: usize,
    /// `t - 1` first, then the second cause if included.
    pub causes: Vec<usize>,
    pub second_cause: Option<SecondCause>,
}

impl CausePrediction {
    pub fn key(&self) -> PairKey {
        PairKey {
            dialogue_id: self.dialogue_id.clone(),
            t: self.t,
        }
    }

    pub fn cause_set(&self) -> BTreeSet<usize> {
        self.causes.iter().copied().collect()
    }

    /// `t-1` present first, at most two causes, second cause before `t-1`.
    pub fn is_well_formed(&self) -> bool {
        self.t >= 1
            && self.causes.first() == Some(&(self.t - 1))
            && self.causes.len() <= 2
            && self.causes.get(1).is_none_or(|&j| j + 2 <= self.t)
            && self.second_cause.is_none_or(|s| s.j + 2 <= self.t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Always include the argmax candidate.
    TrainPreprocess,
    /// Include the argmax candidate only above the threshold.
    Inference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    AlwaysPrev,
    AlwaysPrevTwo,
}

impl FromStr for Baseline {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "always_prev" | "always-prev" => Ok(Baseline::AlwaysPrev),
            "always_prev_two" | "always-prev-two" => Ok(Baseline::AlwaysPrevTwo),
            other => Err(format!("unknown baseline {other:?}")),
        }
    }
}

/// Argmax over candidate scores indexed by `j`, ties going to the largest `j`.
pub fn argmax_recent(scores: &[f64]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (j, &s) in scores.iter().enumerate() {
        if best.is_none_or(|(_, b)| s >= b) {
            best = Some((j, s));
        }
    }
    best
}

/// Scores every `u_j`, `j <= t-2`, against `(u_{t-1}, response)` and returns
/// the most probable one. `history` holds `u_0..u_{t-1}`.
pub fn identify_second_cause(clf: &CiClassifier, history: &[Utterance], response: &str) -> Result<SecondCause> {
    let t = history.len();
    if t < 2 {
        return Err(CauseIdError::NoCandidates(t));
    }
    let triples: Vec<Triple> = (0..t - 1)
        .map(|j| Triple {
            dialogue_id: String::new(),
            u_j: history[j].text.clone(),
            u_prev: history[t - 1].text.clone(),
            response: response.to_string(),
            j,
            t,
        })
        .collect();
    let refs: Vec<&Triple> = triples.iter().collect();
    let scores = clf.score_batch(&refs)?;
    let (j, probability) = argmax_recent(&scores).expect("non-empty candidates");
    Ok(SecondCause { j, probability })
}

/// Builds a prediction from an already identified second cause.
pub fn decide(dialogue_id: &str, t: usize, second: Option<SecondCause>, mode: Mode, threshold: f64) -> CausePrediction {
    let mut causes = vec![t - 1];
    if let Some(s) = second {
        if mode == Mode::TrainPreprocess || s.probability > threshold {
            causes.push(s.j);
        }
    }
    CausePrediction {
        dialogue_id: dialogue_id.to_string(),
        t,
        causes,
        second_cause: second,
    }
}

pub fn predict_causes(
    clf: &CiClassifier,
    pair: &HistoryResponsePair,
    corpus: &Corpus,
    mode: Mode,
    threshold: f64,
) -> Result<CausePrediction> {
    let d = corpus.resolve(pair).ok_or_else(|| CiError::Unresolvable(pair.key()))?;
    let t = pair.t;
    let second = match identify_second_cause(clf, &d.utterances[..t], &d.utterances[t].text) {
        Ok(s) => Some(s),
        Err(CauseIdError::NoCandidates(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(decide(&d.id, t, second, mode, threshold))
}

pub fn predict_all(
    clf: &CiClassifier,
    pairs: &[HistoryResponsePair],
    corpus: &Corpus,
    mode: Mode,
    threshold: f64,
) -> Result<Vec<CausePrediction>> {
    use rayon::prelude::*;
    pairs
        .par_iter()
        .map(|p| predict_causes(clf, p, corpus, mode, threshold))
        .collect()
}

pub fn baseline_causes(pair: &HistoryResponsePair, kind: Baseline) -> CausePrediction {
    let t = pair.t;
    let mut causes = vec![t - 1];
    if kind == Baseline::AlwaysPrevTwo && t >= 2 {
        causes.push(t - 2);
    }
    CausePrediction {
        dialogue_id: pair.dialogue_id.clone(),
        t,
        causes,
        second_cause: None,
    }
}

fn align<'a>(
    predictions: &'a [CausePrediction],
    gold: &'a [HistoryResponsePair],
) -> Result<Vec<(&'a CausePrediction, &'a HistoryResponsePair)>> {
    if predictions.len() != gold.len() {
        return Err(CauseIdError::MisalignedInputs(format!(
            "{} predictions for {} gold pairs",
            predictions.len(),
            gold.len()
        )));
    }
    let by_key: HashMap<PairKey, &CausePrediction> = predictions.iter().map(|p| (p.key(), p)).collect();
    if by_key.len() != predictions.len() {
        return Err(CauseIdError::MisalignedInputs("duplicate prediction keys".into()));
    }
    gold.iter()
        .map(|g| {
            by_key
                .get(&g.key())
                .map(|p| (*p, g))
                .ok_or_else(|| CauseIdError::MisalignedInputs(format!("no prediction for {}", g.key())))
        })
        .collect()
}

/// Micro-averaged precision, recall and F1 over cause index sets.
pub fn evaluate_cause_id(predictions: &[CausePrediction], gold: &[HistoryResponsePair]) -> Result<Prf> {
    Ok(Prf::from(&cause_id_confusion(predictions, gold)?))
}

/// Cause-slot counts behind [`evaluate_cause_id`]; `tn` is left at 0.
pub fn cause_id_confusion(predictions: &[CausePrediction], gold: &[HistoryResponsePair]) -> Result<Confusion> {
    let mut c = Confusion::default();
    for (p, g) in align(predictions, gold)? {
        let pred = p.cause_set();
        let hits = pred.intersection(&g.cause_indices).count();
        c.tp += hits;
        c.fp += pred.len() - hits;
        c.fn_ += g.cause_indices.len() - hits;
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Overlap {
    pub exact: f64,
    pub partial: f64,
    pub disjoint: f64,
}

/// Fractions of pairs whose predicted set equals, intersects, or misses the gold set.
pub fn overlap_analysis(predictions: &[CausePrediction], gold: &[HistoryResponsePair]) -> Result<Overlap> {
    let aligned = align(predictions, gold)?;
    if aligned.is_empty() {
        return Ok(Overlap::default());
    }
    let (mut exact, mut partial, mut disjoint) = (0usize, 0usize, 0usize);
    for (p, g) in &aligned {
        let pred = p.cause_set();
        if pred == g.cause_indices {
            exact += 1;
        } else if pred.intersection(&g.cause_indices).next().is_some() {
            partial += 1;
        } else {
            disjoint += 1;
        }
    }
    let n = aligned.len() as f64;
    Ok(Overlap {
        exact: exact as f64 / n,
        partial: partial as f64 / n,
        disjoint: disjoint as f64 / n,
    })
}
