//! History perturbation study: perplexity of the human response and drift of
//! generated outputs when causes or non-causes are removed from the history.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::IteratorRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapter::{DecodeParams, Generator};
use crate::corpus::{Corpus, HistoryResponsePair, PairKey, Utterance};
use crate::metrics::{average_bleu, two_sample_t_test, SignificanceResult};
use crate::seed;
use crate::text::{token_count, tokens};

#[derive(Debug, Error)]
pub enum PerturbationError {
    #[error("{causes} cause(s) but only {non_causes} non-cause(s) for {key:?}")]
    KTooLarge {
        key: PairKey,
        causes: usize,
        non_causes: usize,
    },
    #[error("pair {0:?} has no gold cause annotation")]
    Unannotated(PairKey),
    #[error("pair {0:?} does not resolve against the corpus")]
    Unresolvable(PairKey),
    #[error("invalid spec: {0}")]
    Spec(String),
}

pub type Result<T, E = PerturbationError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Causes,
    NonCauses,
    NonCausesRandomK,
}

impl Target {
    pub fn as_str(self) -> &'static str {
        match self {
            Target::Causes => "causes",
            Target::NonCauses => "non_causes",
            Target::NonCausesRandomK => "non_causes_random_k",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    ReplacePad,
    Drop,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::ReplacePad => "replace_pad",
            Mode::Drop => "drop",
        }
    }
}

impl FromStr for Target {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "causes" => Ok(Target::Causes),
            "non_causes" => Ok(Target::NonCauses),
            "non_causes_random_k" => Ok(Target::NonCausesRandomK),
            _ => Err(format!("unknown target {s:?}")),
        }
    }
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "replace_pad" => Ok(Mode::ReplacePad),
            "drop" => Ok(Mode::Drop),
            _ => Err(format!("unknown mode {s:?}")),
        }
    }
}

fn default_pad() -> String {
    "<pad>".to_string()
}

fn default_repetitions() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub target: Target,
    pub mode: Mode,
    #[serde(default = "default_pad")]
    pub pad_token: String,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default)]
    pub seed: u64,
}

impl PerturbationSpec {
    pub fn new(target: Target, mode: Mode) -> Self {
        Self {
            target,
            mode,
            pad_token: default_pad(),
            repetitions: default_repetitions(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(PerturbationError::Spec("repetitions must be at least 1".into()));
        }
        if self.mode == Mode::ReplacePad && self.pad_token.trim().is_empty() {
            return Err(PerturbationError::Spec("pad_token must be non-empty".into()));
        }
        Ok(())
    }

    /// Condition label, e.g. `drop:causes`.
    pub fn name(&self) -> String {
        format!("{}:{}", self.mode.as_str(), self.target.as_str())
    }

    /// Deterministic targets are evaluated once; random-k runs `repetitions` times.
    pub fn effective_repetitions(&self) -> usize {
        match self.target {
            Target::NonCausesRandomK => self.repetitions,
            _ => 1,
        }
    }
}

/// Study configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    #[serde(default)]
    pub version: u32,
    #[serde(default)]
    pub seed: u64,
    pub specs: Vec<PerturbationSpec>,
}

/// A perturbed history and the original indices that were targeted.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbed {
    pub history: Vec<Utterance>,
    pub targeted: BTreeSet<usize>,
}

/// Indices of `pair`'s history selected by `spec.target`.
pub fn targeted_indices(
    pair: &HistoryResponsePair,
    spec: &PerturbationSpec,
    repetition: usize,
) -> Result<BTreeSet<usize>> {
    if !pair.is_annotated() {
        return Err(PerturbationError::Unannotated(pair.key()));
    }
    let causes: BTreeSet<usize> = pair.cause_indices.iter().copied().filter(|&j| j < pair.t).collect();
    let non_causes: Vec<usize> = (0..pair.t).filter(|j| !causes.contains(j)).collect();
    Ok(match spec.target {
        Target::Causes => causes,
        Target::NonCauses => non_causes.into_iter().collect(),
        Target::NonCausesRandomK => {
            if causes.len() > non_causes.len() {
                return Err(PerturbationError::KTooLarge {
                    key: pair.key(),
                    causes: causes.len(),
                    non_causes: non_causes.len(),
                });
            }
            let t = pair.t.to_string();
            let rep = repetition.to_string();
            let mut rng = seed::rng(spec.seed, seed::PERTURBATION, &[&pair.dialogue_id, &t, &rep]);
            non_causes
                .into_iter()
                .choose_multiple(&mut rng, causes.len())
                .into_iter()
                .collect()
        }
    })
}

/// Applies `spec` to the history of `pair`.
pub fn perturb_history(
    pair: &HistoryResponsePair,
    corpus: &Corpus,
    spec: &PerturbationSpec,
    repetition: usize,
) -> Result<Perturbed> {
    spec.validate()?;
    let history = corpus
        .history(pair)
        .ok_or_else(|| PerturbationError::Unresolvable(pair.key()))?;
    let targeted = targeted_indices(pair, spec, repetition)?;
    Ok(Perturbed {
        history: apply(history, &targeted, spec),
        targeted,
    })
}

fn apply(history: &[Utterance], targeted: &BTreeSet<usize>, spec: &PerturbationSpec) -> Vec<Utterance> {
    match spec.mode {
        Mode::Drop => history
            .iter()
            .filter(|u| !targeted.contains(&u.index))
            .cloned()
            .collect(),
        Mode::ReplacePad => history
            .iter()
            .map(|u| {
                if !targeted.contains(&u.index) {
                    return u.clone();
                }
                let n = token_count(&u.text);
                let mut out = u.clone();
                out.text = vec![spec.pad_token.as_str(); n].join(" ");
                out.clause_spans = None;
                out
            })
            .collect(),
    }
}

/// Joins `history` with `separator`, dropping the oldest utterances until the
/// token count fits `max_context`.
pub fn conditioning(history: &[Utterance], separator: &str, max_context: Option<usize>) -> (String, usize) {
    let mut start = 0;
    if let Some(max) = max_context {
        let mut total: usize = history.iter().map(|u| token_count(&u.text)).sum();
        while total > max && start < history.len() {
            total -= token_count(&history[start].text);
            start += 1;
        }
    }
    let text = history[start..]
        .iter()
        .map(|u| u.text.as_str())
        .collect::<Vec<_>>()
        .join(separator);
    (text, start)
}

/// Per-pair measurements under one condition, averaged over repetitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairValue {
    pub dialogue_id: String,
    pub t: usize,
    pub ppl: f64,
    pub nll_sum: f64,
    pub n_tokens: usize,
    pub avg_bleu: Option<f64>,
    /// Targeted indices per repetition.
    pub targeted: Vec<Vec<usize>>,
    pub truncated: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairFailure {
    pub dialogue_id: String,
    pub t: usize,
    pub reason: String,
    /// True when the pair was skipped by design (k too large, empty conditioning).
    pub skipped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub name: String,
    pub spec: Option<PerturbationSpec>,
    /// Mean over pairs of per-pair perplexity.
    pub ppl: f64,
    /// `exp` of the corpus-level mean token NLL.
    pub ppl_corpus: f64,
    /// Mean over pairs of BLEU against the unperturbed output; undefined for the baseline.
    pub avg_bleu: Option<f64>,
    pub n_pairs: usize,
    pub n_skipped: usize,
    pub n_failed: usize,
    pub coverage: f64,
    pub per_pair: Vec<PairValue>,
    pub failures: Vec<PairFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub a: String,
    pub b: String,
    pub metric: String,
    pub result: SignificanceResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationReport {
    pub generator: String,
    pub baseline: ConditionReport,
    pub conditions: Vec<ConditionReport>,
    pub significance: Vec<Comparison>,
}

impl PerturbationReport {
    pub fn condition(&self, name: &str) -> Option<&ConditionReport> {
        self.conditions.iter().find(|c| c.name == name)
    }
}

struct Baseline {
    output: String,
}

fn ppl_of(nll: &[f64]) -> f64 {
    if nll.is_empty() {
        return f64::NAN;
    }
    (nll.iter().sum::<f64>() / nll.len() as f64).exp()
}

fn tokens_owned(text: &str) -> Vec<String> {
    tokens(text).into_iter().map(str::to_string).collect()
}

type PairOutcome = std::result::Result<(PairValue, Option<Baseline>), PairFailure>;

fn evaluate_pair(
    generator: &dyn Generator,
    pair: &HistoryResponsePair,
    corpus: &Corpus,
    spec: Option<&PerturbationSpec>,
    params: &DecodeParams,
    baseline: Option<&Baseline>,
) -> PairOutcome {
    let fail = |reason: String, skipped: bool| PairFailure {
        dialogue_id: pair.dialogue_id.clone(),
        t: pair.t,
        reason,
        skipped,
    };
    let (history, response) = match (corpus.history(pair), corpus.response(pair)) {
        (Some(h), Some(r)) => (h, r),
        _ => return Err(fail("pair does not resolve".into(), false)),
    };
    let reps = spec.map_or(1, PerturbationSpec::effective_repetitions);
    let mut ppls = Vec::with_capacity(reps);
    let mut bleus = Vec::new();
    let mut nll_sum = 0.0;
    let mut n_tokens = 0;
    let mut targeted = Vec::new();
    let mut truncated = 0;
    let mut output = String::new();
    for rep in 0..reps {
        let (hist, tgt) = match spec {
            None => (history.to_vec(), BTreeSet::new()),
            Some(s) => match targeted_indices(pair, s, rep) {
                Ok(tgt) => (apply(history, &tgt, s), tgt),
                Err(e @ PerturbationError::KTooLarge { .. }) => return Err(fail(e.to_string(), true)),
                Err(e) => return Err(fail(e.to_string(), false)),
            },
        };
        let empty = hist.is_empty();
        let (context, cut) = conditioning(&hist, generator.turn_separator(), generator.max_context());
        truncated = truncated.max(cut);
        let nll = generator
            .score_target(&context, &response.text)
            .map_err(|e| fail(e.to_string(), empty))?;
        nll_sum += nll.iter().sum::<f64>();
        n_tokens += nll.len();
        ppls.push(ppl_of(&nll));
        output = generator
            .generate(&context, params)
            .map_err(|e| fail(e.to_string(), empty))?;
        if let Some(b) = baseline {
            bleus.push(average_bleu(&tokens_owned(&output), &[tokens_owned(&b.output)]));
        }
        targeted.push(tgt.into_iter().collect());
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok((
        PairValue {
            dialogue_id: pair.dialogue_id.clone(),
            t: pair.t,
            ppl: mean(&ppls),
            nll_sum,
            n_tokens,
            avg_bleu: (!bleus.is_empty()).then(|| mean(&bleus)),
            targeted,
            truncated,
        },
        spec.is_none().then_some(Baseline { output }),
    ))
}

/// Where each pair's generator comes from.
#[derive(Clone, Copy)]
pub enum GeneratorSource<'a> {
    /// One generator for every pair.
    Shared(&'a dyn Generator),
    /// A generator built per pair, e.g. an oracle that knows the pair's causes.
    PerPair(&'a (dyn Fn(&HistoryResponsePair) -> Box<dyn Generator> + Sync)),
}

fn run_condition(
    source: GeneratorSource<'_>,
    pairs: &[HistoryResponsePair],
    corpus: &Corpus,
    spec: Option<&PerturbationSpec>,
    params: &DecodeParams,
    baselines: &BTreeMap<PairKey, Baseline>,
) -> (ConditionReport, Vec<Option<Baseline>>) {
    let work = |p: &HistoryResponsePair| -> PairOutcome {
        let b = baselines.get(&p.key());
        if spec.is_some() && b.is_none() {
            return Err(PairFailure {
                dialogue_id: p.dialogue_id.clone(),
                t: p.t,
                reason: "no baseline output".into(),
                skipped: true,
            });
        }
        match source {
            GeneratorSource::Shared(g) => evaluate_pair(g, p, corpus, spec, params, b),
            GeneratorSource::PerPair(make) => evaluate_pair(make(p).as_ref(), p, corpus, spec, params, b),
        }
    };
    let concurrent = match source {
        GeneratorSource::Shared(g) => g.supports_concurrency(),
        GeneratorSource::PerPair(_) => true,
    };
    let outcomes: Vec<PairOutcome> = if concurrent {
        pairs.par_iter().map(work).collect()
    } else {
        pairs.iter().map(work).collect()
    };

    let mut per_pair = Vec::new();
    let mut failures = Vec::new();
    let mut outputs = Vec::new();
    for o in outcomes {
        match o {
            Ok((v, b)) => {
                per_pair.push(v);
                outputs.push(b);
            }
            Err(f) => {
                failures.push(f);
                outputs.push(None);
            }
        }
    }
    (summarize(spec, per_pair, failures, pairs.len()), outputs)
}

fn summarize(
    spec: Option<&PerturbationSpec>,
    mut per_pair: Vec<PairValue>,
    mut failures: Vec<PairFailure>,
    total: usize,
) -> ConditionReport {
    per_pair.sort_by(|a, b| (&a.dialogue_id, a.t).cmp(&(&b.dialogue_id, b.t)));
    failures.sort_by(|a, b| (&a.dialogue_id, a.t).cmp(&(&b.dialogue_id, b.t)));
    let n = per_pair.len();
    let mean = |it: Vec<f64>| {
        if it.is_empty() {
            f64::NAN
        } else {
            it.iter().sum::<f64>() / it.len() as f64
        }
    };
    let ppl = mean(per_pair.iter().map(|v| v.ppl).collect());
    let tokens: usize = per_pair.iter().map(|v| v.n_tokens).sum();
    let nll: f64 = per_pair.iter().map(|v| v.nll_sum).sum();
    let ppl_corpus = if tokens == 0 {
        f64::NAN
    } else {
        (nll / tokens as f64).exp()
    };
    let avg_bleu = spec.map(|_| mean(per_pair.iter().filter_map(|v| v.avg_bleu).collect()));
    let n_skipped = failures.iter().filter(|f| f.skipped).count();
    ConditionReport {
        name: spec.map_or_else(|| "none".to_string(), PerturbationSpec::name),
        spec: spec.cloned(),
        ppl,
        ppl_corpus,
        avg_bleu,
        n_pairs: n,
        n_skipped,
        n_failed: failures.len() - n_skipped,
        coverage: if total == 0 { 0.0 } else { n as f64 / total as f64 },
        per_pair,
        failures,
    }
}

fn compare(a: &ConditionReport, b: &ConditionReport) -> Vec<Comparison> {
    let mut out = Vec::new();
    let metrics: [(&str, fn(&PairValue) -> Option<f64>); 2] = [("ppl", |v| Some(v.ppl)), ("avg_bleu", |v| v.avg_bleu)];
    for (metric, get) in metrics {
        let xa: Vec<f64> = a.per_pair.iter().filter_map(get).collect();
        let xb: Vec<f64> = b.per_pair.iter().filter_map(get).collect();
        if let Ok(result) = two_sample_t_test(&xa, &xb) {
            out.push(Comparison {
                a: a.name.clone(),
                b: b.name.clone(),
                metric: metric.to_string(),
                result,
            });
        }
    }
    out
}

/// Runs the unperturbed baseline and every spec over `pairs`.
///
/// Per-pair values of random-k conditions are averaged over repetitions.
/// Within each mode, causes are compared against non-causes and against
/// random-k with Welch t-tests over the per-pair values.
pub fn run_perturbation_study(
    generator: &dyn Generator,
    corpus: &Corpus,
    pairs: &[HistoryResponsePair],
    specs: &[PerturbationSpec],
    params: &DecodeParams,
) -> Result<PerturbationReport> {
    let label = format!("{}@{}", generator.name(), generator.version());
    run_study(GeneratorSource::Shared(generator), &label, corpus, pairs, specs, params)
}

/// [`run_perturbation_study`] with the generator of each pair chosen by `source`.
pub fn run_study(
    source: GeneratorSource<'_>,
    label: &str,
    corpus: &Corpus,
    pairs: &[HistoryResponsePair],
    specs: &[PerturbationSpec],
    params: &DecodeParams,
) -> Result<PerturbationReport> {
    for s in specs {
        s.validate()?;
    }
    let (baseline, outputs) = run_condition(source, pairs, corpus, None, params, &BTreeMap::new());
    let baselines: BTreeMap<PairKey, Baseline> = pairs
        .iter()
        .zip(outputs)
        .filter_map(|(p, b)| b.map(|b| (p.key(), b)))
        .collect();

    let conditions: Vec<ConditionReport> = specs
        .iter()
        .map(|s| run_condition(source, pairs, corpus, Some(s), params, &baselines).0)
        .collect();

    let mut significance = Vec::new();
    let modes: BTreeSet<Mode> = specs.iter().map(|s| s.mode).collect();
    for mode in modes {
        let find = |target| {
            conditions
                .iter()
                .find(|c| c.spec.as_ref().is_some_and(|s| s.mode == mode && s.target == target))
        };
        if let Some(cause) = find(Target::Causes) {
            for other in [Target::NonCauses, Target::NonCausesRandomK] {
                if let Some(o) = find(other) {
                    significance.extend(compare(cause, o));
                }
            }
        }
    }

    Ok(PerturbationReport {
        generator: label.to_string(),
        baseline,
        conditions,
        significance,
    })
}

/// Deterministic generator that reads only the lines of its context that are
/// cause texts of one pair.
///
/// `generate` returns the sorted words of those lines; `score_target` is a
/// smoothed unigram over the same words.
#[derive(Debug, Clone)]
pub struct CauseOracleGenerator {
    causes: HashSet<String>,
    separator: String,
}

const ORACLE_ALPHA: f64 = 0.1;
const ORACLE_VOCAB: f64 = 10_000.0;

impl CauseOracleGenerator {
    pub fn new(causes: impl IntoIterator<Item = String>) -> Self {
        Self {
            causes: causes.into_iter().collect(),
            separator: crate::adapter::DEFAULT_TURN_SEPARATOR.to_string(),
        }
    }

    /// Oracle for the gold causes of `pair`.
    pub fn for_pair(corpus: &Corpus, pair: &HistoryResponsePair) -> Self {
        let history = corpus.history(pair).unwrap_or_default();
        Self::new(
            pair.cause_indices
                .iter()
                .filter_map(|&j| history.get(j).map(|u| u.text.clone())),
        )
    }

    /// Whether a non-cause of `pair` has the same text as one of its causes,
    /// which would make the oracle read it.
    pub fn has_collision(corpus: &Corpus, pair: &HistoryResponsePair) -> bool {
        let oracle = Self::for_pair(corpus, pair);
        corpus
            .history(pair)
            .unwrap_or_default()
            .iter()
            .any(|u| !pair.cause_indices.contains(&u.index) && oracle.is_cause_text(&u.text))
    }

    /// Runs a study where every pair gets its own oracle.
    pub fn study(
        corpus: &Corpus,
        pairs: &[HistoryResponsePair],
        specs: &[PerturbationSpec],
        params: &DecodeParams,
    ) -> Result<PerturbationReport> {
        let make = |p: &HistoryResponsePair| -> Box<dyn Generator> { Box::new(Self::for_pair(corpus, p)) };
        run_study(
            GeneratorSource::PerPair(&make),
            "cause-oracle@1",
            corpus,
            pairs,
            specs,
            params,
        )
    }

    pub fn is_cause_text(&self, text: &str) -> bool {
        self.causes.contains(text)
    }

    fn cause_words<'a>(&self, context: &'a str) -> Vec<&'a str> {
        let mut words: Vec<&str> = context
            .split(self.separator.as_str())
            .filter(|line| self.causes.contains(*line))
            .flat_map(str::split_whitespace)
            .collect();
        words.sort_unstable();
        words
    }
}

impl Generator for CauseOracleGenerator {
    fn name(&self) -> &str {
        "cause-oracle"
    }

    fn version(&self) -> &str {
        "1"
    }

    fn generate(&self, context: &str, _params: &DecodeParams) -> crate::adapter::Result<String> {
        Ok(self.cause_words(context).join(" "))
    }

    fn score_target(&self, context: &str, target: &str) -> crate::adapter::Result<Vec<f64>> {
        let words = self.cause_words(context);
        let n = words.len() as f64;
        Ok(target
            .split_whitespace()
            .map(|w| {
                let c = words.iter().filter(|x| **x == w).count() as f64;
                -((c + ORACLE_ALPHA) / (n + ORACLE_ALPHA * ORACLE_VOCAB)).ln()
            })
            .collect())
    }

    fn turn_separator(&self) -> &str {
        &self.separator
    }
}

impl fmt::Display for PerturbationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Dialogue, Source, Speaker};

    fn fixture() -> (Corpus, HistoryResponsePair) {
        let turns: Vec<(Speaker, &str)> = (0..7)
            .map(|i| {
                let s = if i % 2 == 0 {
                    Speaker::Seeker
                } else {
                    Speaker::Supporter
                };
                (s, ["aa bb", "cc dd ee", "ff", "gg hh", "ii jj kk", "ll", "mm nn"][i])
            })
            .collect();
        let d = Dialogue::from_turns("d", Source::Other, turns);
        (Corpus::new(vec![d]), HistoryResponsePair::with_causes("d", 6, [3, 5]))
    }

    fn texts(p: &Perturbed) -> Vec<&str> {
        p.history.iter().map(|u| u.text.as_str()).collect()
    }

    #[test]
    fn drop_causes_removes_them() {
        let (c, mut p) = fixture();
        p.cause_indices = [3].into();
        let out = perturb_history(&p, &c, &PerturbationSpec::new(Target::Causes, Mode::Drop), 0).unwrap();
        assert_eq!(texts(&out), ["aa bb", "cc dd ee", "ff", "ii jj kk", "ll"]);
    }

    #[test]
    fn replace_pad_keeps_counts() {
        let (c, p) = fixture();
        let out = perturb_history(&p, &c, &PerturbationSpec::new(Target::NonCauses, Mode::ReplacePad), 0).unwrap();
        assert_eq!(out.history.len(), 6);
        assert_eq!(texts(&out)[1], "<pad> <pad> <pad>");
        assert_eq!(texts(&out)[3], "gg hh");
    }

    #[test]
    fn random_k_picks_k_non_causes() {
        let (c, p) = fixture();
        let spec = PerturbationSpec::new(Target::NonCausesRandomK, Mode::Drop);
        let subsets: BTreeSet<BTreeSet<usize>> = (0..20)
            .map(|r| perturb_history(&p, &c, &spec, r).unwrap().targeted)
            .collect();
        assert!(subsets.len() > 1);
        for s in &subsets {
            assert_eq!(s.len(), 2);
            assert!(s.is_disjoint(&p.cause_indices));
        }
    }

    #[test]
    fn k_too_large() {
        let (c, mut p) = fixture();
        p.t = 2;
        p.cause_indices = [0, 1].into();
        let spec = PerturbationSpec::new(Target::NonCausesRandomK, Mode::Drop);
        assert!(matches!(
            perturb_history(&p, &c, &spec, 0),
            Err(PerturbationError::KTooLarge { .. })
        ));
    }

    #[test]
    fn truncation_drops_oldest() {
        let (c, p) = fixture();
        let (text, cut) = conditioning(c.history(&p).unwrap(), "|", Some(6));
        assert_eq!(cut, 3);
        assert_eq!(text, "gg hh|ii jj kk|ll");
    }

    #[test]
    fn oracle_study() {
        let (c, p) = fixture();
        let specs = [
            PerturbationSpec::new(Target::Causes, Mode::Drop),
            PerturbationSpec::new(Target::NonCauses, Mode::Drop),
        ];
        let r = CauseOracleGenerator::study(&c, &[p], &specs, &DecodeParams::plain5()).unwrap();
        assert!(r.baseline.avg_bleu.is_none());
        assert_eq!(r.condition("drop:non_causes").unwrap().avg_bleu, Some(1.0));
        assert_eq!(r.condition("drop:non_causes").unwrap().ppl, r.baseline.ppl);
        assert!(r.condition("drop:causes").unwrap().avg_bleu.unwrap() < 1.0);
    }
}
