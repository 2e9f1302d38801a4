use rand::Rng;

use super::{CiError, LabeledTriple, Origin, Result, Triple};
use crate::corpus::{Corpus, Dialogue, HistoryResponsePair};
use crate::seed;

/// Negatives for the dependence classifier lie at least this far before `t`.
pub const DEPENDENCE_MIN_GAP: usize = 4;

pub fn triple_for(dialogue: &Dialogue, t: usize, j: usize) -> Triple {
    Triple {
        dialogue_id: dialogue.id.clone(),
        u_j: dialogue.utterances[j].text.clone(),
        u_prev: dialogue.utterances[t - 1].text.clone(),
        response: dialogue.utterances[t].text.clone(),
        j,
        t,
    }
}

fn resolve<'a>(corpus: &'a Corpus, pair: &HistoryResponsePair) -> Result<&'a Dialogue> {
    corpus.resolve(pair).ok_or_else(|| CiError::Unresolvable(pair.key()))
}

/// One triple per candidate `j` in `0..=t-2`; empty when `t < 2`.
pub fn candidate_triples(pair: &HistoryResponsePair, corpus: &Corpus) -> Result<Vec<Triple>> {
    let d = resolve(corpus, pair)?;
    Ok((0..pair.t.saturating_sub(1))
        .map(|j| triple_for(d, pair.t, j))
        .collect())
}

/// Gold triples: `j` is positive iff annotated as a cause, for every `j <= t-2`.
pub fn build_supervised_set(pairs: &[HistoryResponsePair], corpus: &Corpus) -> Result<Vec<LabeledTriple>> {
    let mut out = Vec::new();
    for pair in pairs {
        for triple in candidate_triples(pair, corpus)? {
            let label = pair.cause_indices.contains(&triple.j);
            out.push(LabeledTriple {
                triple,
                label,
                origin: Origin::Gold,
            });
        }
    }
    Ok(out)
}

/// Training data for the dependence classifier: `(u_{t-1}, r_t)` positives and
/// one distant `(u_j, r_t)` negative per pair with `j <= t - DEPENDENCE_MIN_GAP`.
pub fn build_dependence_set(
    pairs: &[HistoryResponsePair],
    corpus: &Corpus,
    run_seed: u64,
) -> Result<Vec<LabeledTriple>> {
    let mut out = Vec::new();
    for pair in pairs {
        let d = resolve(corpus, pair)?;
        let t = pair.t;
        out.push(LabeledTriple {
            triple: triple_for(d, t, t - 1),
            label: true,
            origin: Origin::Gold,
        });
        if t >= DEPENDENCE_MIN_GAP {
            let t_str = t.to_string();
            let mut rng = seed::rng(run_seed, seed::NEGATIVES, &["dependence", &d.id, &t_str]);
            let j = rng.random_range(0..=t - DEPENDENCE_MIN_GAP);
            out.push(LabeledTriple {
                triple: triple_for(d, t, j),
                label: false,
                origin: Origin::Gold,
            });
        }
    }
    Ok(out)
}
