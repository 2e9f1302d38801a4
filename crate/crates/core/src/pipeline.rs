//! Cause-filtered training data and CI-scored response selection.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapter::{AdapterError, DecodeParams, Generator};
use crate::cause_id::{identify_second_cause, CauseIdError};
use crate::ci::{normalize_token, CiClassifier, CiError, Triple};
use crate::corpus::{Corpus, HistoryResponsePair, Utterance};
use crate::metrics::{distinct_n, self_bleu, MetricsError};
use crate::text::tokens;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("candidate list has no u_{{t-1}}-only fallback")]
    MissingFallback,
    #[error("history is empty")]
    EmptyHistory,
    #[error(transparent)]
    Ci(#[from] CiError),
    #[error(transparent)]
    CauseId(#[from] CauseIdError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Adapter(#[from] AdapterError),
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

/// One generator training example with its history reduced to direct causes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub dialogue_id: String,
    pub t: usize,
    /// Utterance indices used as conditioning, in dialogue order.
    pub causes: Vec<usize>,
    pub conditioning: String,
    pub response: String,
}

/// Joins the utterances at `indices` (in dialogue order) with `separator`.
pub fn conditioning_text(history: &[Utterance], indices: &[usize], separator: &str) -> String {
    let mut idx = indices.to_vec();
    idx.sort_unstable();
    idx.dedup();
    idx.iter()
        .map(|&i| history[i].text.as_str())
        .collect::<Vec<_>>()
        .join(separator)
}

/// Keeps `u_{j*}` and `u_{t-1}` for every pair, `j*` being the argmax second
/// cause without threshold. Output order follows `pairs`.
pub fn preprocess_training_set(
    clf: &CiClassifier,
    pairs: &[HistoryResponsePair],
    corpus: &Corpus,
    separator: &str,
) -> Result<Vec<TrainingExample>> {
    pairs
        .par_iter()
        .map(|p| {
            let d = corpus.resolve(p).ok_or_else(|| CiError::Unresolvable(p.key()))?;
            let t = p.t;
            let mut causes = vec![t - 1];
            match identify_second_cause(clf, &d.utterances[..t], &d.utterances[t].text) {
                Ok(s) => causes.insert(0, s.j),
                Err(CauseIdError::NoCandidates(_)) => {}
                Err(e) => return Err(e.into()),
            }
            Ok(TrainingExample {
                dialogue_id: d.id.clone(),
                t,
                conditioning: conditioning_text(&d.utterances, &causes, separator),
                response: d.utterances[t].text.clone(),
                causes,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateResponse {
    /// `None` for the fallback conditioned on `u_{t-1}` alone.
    pub j: Option<usize>,
    pub conditioning_text: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci_score: Option<f64>,
    /// Generator failure for this candidate; `text` is empty.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl CandidateResponse {
    pub fn is_fallback(&self) -> bool {
        self.j.is_none()
    }
}

/// One candidate per `j` in `0..=t-2`, in order, then the fallback.
/// `history` holds `u_0..u_{t-1}`.
pub fn generate_candidates(
    gen: &dyn Generator,
    history: &[Utterance],
    params: &DecodeParams,
) -> Result<Vec<CandidateResponse>> {
    let t = history.len();
    if t == 0 {
        return Err(PipelineError::EmptyHistory);
    }
    let sep = gen.turn_separator();
    let mut plan: Vec<(Option<usize>, String)> = (0..t - 1)
        .map(|j| (Some(j), conditioning_text(history, &[j, t - 1], sep)))
        .collect();
    plan.push((None, history[t - 1].text.clone()));
    let run = |(j, ctx): &(Option<usize>, String)| {
        let (text, error) = match gen.generate(ctx, params) {
            Ok(text) => (text, None),
            Err(e) => (String::new(), Some(e.to_string())),
        };
        CandidateResponse {
            j: *j,
            conditioning_text: ctx.clone(),
            text,
            ci_score: None,
            error,
        }
    };
    Ok(if gen.supports_concurrency() {
        plan.par_iter().map(run).collect()
    } else {
        plan.iter().map(run).collect()
    })
}

fn candidate_triple(history: &[Utterance], j: usize, text: &str) -> Triple {
    let t = history.len();
    Triple {
        dialogue_id: String::new(),
        u_j: history[j].text.clone(),
        u_prev: history[t - 1].text.clone(),
        response: text.to_string(),
        j,
        t,
    }
}

/// Fills `ci_score` of every non-failed `j` candidate with
/// `p(l = 1 | u_j, u_{t-1}, candidate text)`.
pub fn score_candidates(clf: &CiClassifier, history: &[Utterance], candidates: &mut [CandidateResponse]) -> Result<()> {
    let targets: Vec<(usize, Triple)> = candidates
        .iter()
        .enumerate()
        .filter(|(_, c)| c.error.is_none())
        .filter_map(|(i, c)| c.j.map(|j| (i, candidate_triple(history, j, &c.text))))
        .collect();
    let refs: Vec<&Triple> = targets.iter().map(|(_, t)| t).collect();
    let scores = clf.score_batch(&refs)?;
    for ((i, _), s) in targets.iter().zip(scores) {
        candidates[*i].ci_score = Some(s);
    }
    Ok(())
}

/// Index of the scored `j` candidate with the highest score when it exceeds
/// `threshold`, otherwise of the fallback. Ties go to the largest `j`.
pub fn select_index(candidates: &[CandidateResponse], threshold: f64) -> Result<usize> {
    let fallback = candidates
        .iter()
        .position(|c| c.is_fallback())
        .ok_or(PipelineError::MissingFallback)?;
    let best = candidates
        .iter()
        .enumerate()
        .filter_map(|(i, c)| Some((i, c.j?, c.ci_score?)))
        .fold(None::<(usize, usize, f64)>, |acc, x| match acc {
            Some(a) if a.2 > x.2 || (a.2 == x.2 && a.1 > x.1) => Some(a),
            _ => Some(x),
        });
    Ok(match best {
        Some((i, _, s)) if s > threshold => i,
        _ => fallback,
    })
}

/// Scores the candidates and returns the selected one.
pub fn select_response(
    clf: &CiClassifier,
    history: &[Utterance],
    candidates: &[CandidateResponse],
    threshold: f64,
) -> Result<CandidateResponse> {
    let mut scored = candidates.to_vec();
    score_candidates(clf, history, &mut scored)?;
    let i = select_index(&scored, threshold)?;
    Ok(scored[i].clone())
}

/// Highest-dependence `j` candidate by `p_dep(l = 1 | u_j, candidate text)`,
/// ignoring `u_{t-1}`; the fallback only when no `j` candidate succeeded.
pub fn rerank_by_dependence(
    dep: &CiClassifier,
    history: &[Utterance],
    candidates: &[CandidateResponse],
) -> Result<CandidateResponse> {
    let mut scored = candidates.to_vec();
    score_candidates(dep, history, &mut scored)?;
    let i = select_index(&scored, f64::NEG_INFINITY)?;
    Ok(scored[i].clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diversity {
    pub self_bleu: f64,
    pub distinct_1: f64,
    pub distinct_2: f64,
}

/// Mean self-BLEU over candidate sets; distinct-n pooled over all candidates.
pub fn candidate_diversity(sets: &[Vec<String>]) -> Result<Diversity> {
    if sets.is_empty() {
        return Err(MetricsError::DegenerateInput("no candidate sets".into()).into());
    }
    let tokenized: Vec<Vec<Vec<&str>>> = sets.iter().map(|s| s.iter().map(|c| tokens(c)).collect()).collect();
    let mut sb = 0.0;
    for set in &tokenized {
        sb += self_bleu(set)?;
    }
    let pooled: Vec<Vec<&str>> = tokenized.into_iter().flatten().collect();
    Ok(Diversity {
        self_bleu: sb / sets.len() as f64,
        distinct_1: distinct_n(&pooled, 1)?,
        distinct_2: distinct_n(&pooled, 2)?,
    })
}

/// Deterministic generator that echoes the keywords of its context.
///
/// Keywords are the distinct normalized tokens of at least three characters
/// outside a small stop list, read from the last line of the context back to
/// the first. At most `2 * beam` are kept; `min_len` pads with filler words,
/// and `ngram_block` drops tokens that would repeat an n-gram.
#[derive(Debug, Clone)]
pub struct TemplateGenerator {
    pub separator: String,
    pub max_context: Option<usize>,
}

const STOP: &[&str] = &[
    "the", "and", "but", "for", "are", "was", "you", "your", "that", "this", "with", "have", "not", "all", "can",
    "its", "it's", "i'm", "what", "just", "they", "them", "from", "has",
];
const FILLER: &[&str] = &["well", "so", "right", "okay", "sure", "then", "yes", "indeed"];
/// Vocabulary size of the smoothed unigram used by `score_target`.
const SCORE_VOCAB: f64 = 50_000.0;
const SCORE_ALPHA: f64 = 0.1;

impl Default for TemplateGenerator {
    fn default() -> Self {
        Self {
            separator: crate::adapter::DEFAULT_TURN_SEPARATOR.to_string(),
            max_context: None,
        }
    }
}

impl TemplateGenerator {
    pub fn keywords(&self, context: &str) -> Vec<String> {
        let mut seen = std::collections::HashSet::new();
        let mut out = Vec::new();
        let lines: Vec<&str> = if self.separator.is_empty() {
            vec![context]
        } else {
            context.split(self.separator.as_str()).collect()
        };
        for line in lines.iter().rev() {
            for tok in line.split_whitespace() {
                let w = normalize_token(tok);
                if w.chars().count() >= 3 && !STOP.contains(&w.as_str()) && seen.insert(w.clone()) {
                    out.push(w);
                }
            }
        }
        out
    }
}

fn completes_repeat(tokens: &[String], next: &str, n: usize) -> bool {
    if n == 0 || tokens.len() + 1 < n {
        return false;
    }
    let tail = &tokens[tokens.len() + 1 - n..];
    tokens.windows(n).any(|w| w[..n - 1] == *tail && w[n - 1] == next)
}

impl Generator for TemplateGenerator {
    fn name(&self) -> &str {
        "template"
    }

    fn version(&self) -> &str {
        "1"
    }

    fn generate(&self, context: &str, params: &DecodeParams) -> crate::adapter::Result<String> {
        let mut out: Vec<String> = Vec::new();
        for w in self.keywords(context).into_iter().take(2 * params.beam.max(1)) {
            if !completes_repeat(&out, &w, params.ngram_block) {
                out.push(w);
            }
        }
        let mut k = 0;
        let mut stalled = 0;
        while out.len() < params.min_len && stalled < FILLER.len() {
            let w = FILLER[k % FILLER.len()];
            k += 1;
            if completes_repeat(&out, w, params.ngram_block) {
                stalled += 1;
            } else {
                out.push(w.to_string());
                stalled = 0;
            }
        }
        Ok(out.join(" "))
    }

    fn score_target(&self, context: &str, target: &str) -> crate::adapter::Result<Vec<f64>> {
        let mut counts: HashMap<String, f64> = HashMap::new();
        let mut n = 0.0;
        for tok in context.split_whitespace() {
            *counts.entry(normalize_token(tok)).or_insert(0.0) += 1.0;
            n += 1.0;
        }
        Ok(target
            .split_whitespace()
            .map(|tok| {
                let c = counts.get(&normalize_token(tok)).copied().unwrap_or(0.0);
                -((c + SCORE_ALPHA) / (n + SCORE_ALPHA * SCORE_VOCAB)).ln()
            })
            .collect())
    }

    fn turn_separator(&self) -> &str {
        &self.separator
    }

    fn max_context(&self) -> Option<usize> {
        self.max_context
    }
}
