use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::{build_supervised_set, CiClassifier, CiError, LabeledTriple, Result};
use crate::corpus::{Corpus, HistoryResponsePair};
use crate::metrics::Confusion;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierEval {
    pub confusion: Confusion,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Accuracy on a 1:1 subsample (the larger class downsampled).
    pub balanced_accuracy: f64,
    pub n_positive: usize,
    pub n_negative: usize,
}

/// Metrics at threshold 0.5 over labeled triples.
pub fn evaluate_triples(clf: &CiClassifier, data: &[LabeledTriple], run_seed: u64) -> Result<ClassifierEval> {
    let triples: Vec<_> = data.iter().map(|l| &l.triple).collect();
    let scores = clf.score_batch(&triples)?;
    let predicted: Vec<bool> = scores.iter().map(|&s| s > 0.5).collect();
    let mut confusion = Confusion::default();
    for (p, l) in predicted.iter().zip(data) {
        confusion.add(*p, l.label);
    }
    let pos: Vec<usize> = (0..data.len()).filter(|&i| data[i].label).collect();
    let neg: Vec<usize> = (0..data.len()).filter(|&i| !data[i].label).collect();
    if pos.is_empty() {
        return Err(CiError::NoPositives);
    }
    let k = pos.len().min(neg.len());
    let mut rng = seed::rng(run_seed, seed::EVALUATION, &["balanced"]);
    let mut correct = 0usize;
    let mut total = 0usize;
    for class in [&pos, &neg] {
        for i in sample(&mut rng, class.len(), k) {
            let idx = class[i];
            correct += usize::from(predicted[idx] == data[idx].label);
            total += 1;
        }
    }
    Ok(ClassifierEval {
        precision: confusion.precision(),
        recall: confusion.recall(),
        f1: confusion.f1(),
        confusion,
        balanced_accuracy: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
        n_positive: pos.len(),
        n_negative: neg.len(),
    })
}

/// [`evaluate_triples`] over the gold triples of annotated pairs.
pub fn evaluate_classifier(
    clf: &CiClassifier,
    pairs: &[HistoryResponsePair],
    corpus: &Corpus,
    run_seed: u64,
) -> Result<ClassifierEval> {
    evaluate_triples(clf, &build_supervised_set(pairs, corpus)?, run_seed)
}
