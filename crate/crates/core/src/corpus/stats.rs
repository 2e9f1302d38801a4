use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusError, HistoryResponsePair, Result};
use crate::text::{token_count, tokens_in_spans};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub n_dialogues: usize,
    pub n_pairs: usize,
    pub n_utterances: usize,
    pub n_cause_utterances: usize,
    pub avg_cause_token_length: MeanStd,
    pub cause_proportion_in_utterance: MeanStd,
    /// Number of causes of a response -> fraction of annotated responses.
    pub causes_per_response_histogram: BTreeMap<usize, f64>,
    /// Distance `t - j` -> fraction of cause slots.
    pub proximity_histogram: BTreeMap<usize, f64>,
}

fn normalize(counts: BTreeMap<usize, usize>) -> BTreeMap<usize, f64> {
    let total: usize = counts.values().sum();
    counts.into_iter().map(|(k, c)| (k, c as f64 / total as f64)).collect()
}

/// Descriptive statistics over `pairs`.
///
/// Dialogue and utterance counts cover the dialogues referenced by `pairs`.
/// Every (pair, cause) slot contributes one cause length: the tokens covered by
/// its spans when annotated with spans, the whole utterance otherwise.
pub fn corpus_stats(pairs: &[HistoryResponsePair], corpus: &Corpus) -> Result<StatsReport> {
    let mut dialogue_ids = BTreeSet::new();
    let mut cause_utterances = BTreeSet::new();
    let mut lengths = Vec::new();
    let mut proportions = Vec::new();
    let mut per_response = BTreeMap::new();
    let mut proximity = BTreeMap::new();

    for pair in pairs {
        let dialogue = corpus.resolve(pair).ok_or_else(|| CorpusError::DanglingAnnotation {
            line: 0,
            dialogue_id: pair.dialogue_id.clone(),
            reason: format!("pair t={} does not resolve", pair.t),
        })?;
        dialogue_ids.insert(dialogue.id.as_str());
        if !pair.is_annotated() {
            continue;
        }
        *per_response.entry(pair.cause_indices.len()).or_insert(0usize) += 1;
        for &j in &pair.cause_indices {
            if j >= pair.t {
                return Err(CorpusError::DanglingAnnotation {
                    line: 0,
                    dialogue_id: pair.dialogue_id.clone(),
                    reason: format!("cause {j} not before t={}", pair.t),
                });
            }
            cause_utterances.insert((dialogue.id.as_str(), j));
            *proximity.entry(pair.t - j).or_insert(0usize) += 1;
            let text = &dialogue.utterances[j].text;
            let total = token_count(text);
            let covered = match pair.cause_spans.get(&j) {
                Some(spans) if !spans.is_empty() => tokens_in_spans(text, spans).len(),
                _ => total,
            };
            lengths.push(covered as f64);
            if total > 0 {
                proportions.push(covered as f64 / total as f64);
            }
        }
    }

    Ok(StatsReport {
        n_dialogues: dialogue_ids.len(),
        n_pairs: pairs.len(),
        n_utterances: dialogue_ids
            .iter()
            .map(|id| corpus.get(id).map_or(0, |d| d.len()))
            .sum(),
        n_cause_utterances: cause_utterances.len(),
        avg_cause_token_length: MeanStd::of(&lengths),
        cause_proportion_in_utterance: MeanStd::of(&proportions),
        causes_per_response_histogram: normalize(per_response),
        proximity_histogram: normalize(proximity),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Dialogue, Source, Speaker};
    use crate::text::Span;

    fn corpus() -> Corpus {
        Corpus::new(vec![Dialogue::from_turns(
            "a",
            Source::Other,
            [
                (Speaker::Seeker, "one two three four"),
                (Speaker::Supporter, "five six"),
            ],
        )])
    }

    #[test]
    fn whole_previous_utterance() {
        let pairs = vec![HistoryResponsePair::with_causes("a", 1, [0])];
        let r = corpus_stats(&pairs, &corpus()).unwrap();
        assert_eq!(r.cause_proportion_in_utterance.mean, 1.0);
        assert_eq!(r.proximity_histogram, BTreeMap::from([(1, 1.0)]));
        assert_eq!(r.avg_cause_token_length.mean, 4.0);
        assert_eq!(r.n_utterances, 2);
        assert_eq!(r.n_cause_utterances, 1);
    }

    #[test]
    fn spans_select_tokens() {
        let mut pair = HistoryResponsePair::with_causes("a", 1, [0]);
        // "two three" at chars 4..13
        pair.cause_spans.insert(0, vec![Span::new(4, 13)]);
        let r = corpus_stats(&[pair], &corpus()).unwrap();
        assert_eq!(r.avg_cause_token_length.mean, 2.0);
        assert_eq!(r.cause_proportion_in_utterance.mean, 0.5);
    }

    #[test]
    fn empty_is_zero() {
        let r = corpus_stats(&[], &corpus()).unwrap();
        assert_eq!(r, StatsReport::default());
    }

    #[test]
    fn unresolvable_pair_errors() {
        let pairs = vec![HistoryResponsePair::with_causes("zz", 1, [0])];
        assert!(corpus_stats(&pairs, &corpus()).is_err());
    }
}
