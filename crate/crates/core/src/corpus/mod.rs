//! Cause-annotated dialogue corpora.
//!
//! A [`Dialogue`] is an ordered list of utterances. A [`HistoryResponsePair`]
//! points at one response `u_t` of a dialogue (its history is `u_0..u_{t-1}`)
//! and carries the indices of the history utterances annotated as its direct
//! causes. Unannotated pairs (empty cause set) are the unlabeled pool used by
//! self-training.

mod io;
mod split;
mod stats;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::Span;

pub use io::{load_corpus, parse_corpus, save_corpus, write_corpus, Loaded};
pub use split::{split_corpus, CorpusSplit, SplitRatios};
pub use stats::{corpus_stats, MeanStd, StatsReport};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: malformed record: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("line {line}: dangling annotation in dialogue {dialogue_id:?}: {reason}")]
    DanglingAnnotation {
        line: usize,
        dialogue_id: String,
        reason: String,
    },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid split ratios: {0}")]
    InvalidRatios(String),
}

pub type Result<T, E = CorpusError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    Seeker,
    Supporter,
    GenericA,
    GenericB,
}

impl Speaker {
    pub fn as_str(self) -> &'static str {
        match self {
            Speaker::Seeker => "seeker",
            Speaker::Supporter => "supporter",
            Speaker::GenericA => "generic_a",
            Speaker::GenericB => "generic_b",
        }
    }
}

impl FromStr for Speaker {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "seeker" => Ok(Speaker::Seeker),
            "supporter" => Ok(Speaker::Supporter),
            "generic_a" => Ok(Speaker::GenericA),
            "generic_b" => Ok(Speaker::GenericB),
            other => Err(format!("unknown speaker {other:?}")),
        }
    }
}

impl fmt::Display for Speaker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Esconv,
    Msc,
    Synthetic,
    Other,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Esconv => "esconv",
            Source::Msc => "msc",
            Source::Synthetic => "synthetic",
            Source::Other => "other",
        }
    }

    /// Unknown source names map to [`Source::Other`].
    pub fn parse_lenient(s: &str) -> (Self, bool) {
        match s {
            "esconv" => (Source::Esconv, true),
            "msc" => (Source::Msc, true),
            "synthetic" => (Source::Synthetic, true),
            "other" => (Source::Other, true),
            _ => (Source::Other, false),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Utterance {
    pub index: usize,
    pub speaker: Speaker,
    pub text: String,
    pub clause_spans: Option<Vec<Span>>,
}

impl Utterance {
    pub fn new(index: usize, speaker: Speaker, text: impl Into<String>) -> Self {
        Self {
            index,
            speaker,
            text: text.into(),
            clause_spans: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dialogue {
    pub id: String,
    pub source: Source,
    pub utterances: Vec<Utterance>,
}

impl Dialogue {
    /// Builds a dialogue from `(speaker, text)` turns, numbering them from 0.
    pub fn from_turns<S: Into<String>>(
        id: impl Into<String>,
        source: Source,
        turns: impl IntoIterator<Item = (Speaker, S)>,
    ) -> Self {
        let utterances = turns
            .into_iter()
            .enumerate()
            .map(|(i, (speaker, text))| Utterance::new(i, speaker, text))
            .collect();
        Self {
            id: id.into(),
            source,
            utterances,
        }
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }
}

/// A response `u_t` together with its gold direct causes (possibly none).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HistoryResponsePair {
    pub dialogue_id: String,
    pub t: usize,
    pub cause_indices: BTreeSet<usize>,
    pub cause_spans: BTreeMap<usize, Vec<Span>>,
}

impl HistoryResponsePair {
    pub fn unlabeled(dialogue_id: impl Into<String>, t: usize) -> Self {
        Self {
            dialogue_id: dialogue_id.into(),
            t,
            cause_indices: BTreeSet::new(),
            cause_spans: BTreeMap::new(),
        }
    }

    pub fn with_causes(dialogue_id: impl Into<String>, t: usize, causes: impl IntoIterator<Item = usize>) -> Self {
        Self {
            dialogue_id: dialogue_id.into(),
            t,
            cause_indices: causes.into_iter().collect(),
            cause_spans: BTreeMap::new(),
        }
    }

    pub fn key(&self) -> PairKey {
        PairKey {
            dialogue_id: self.dialogue_id.clone(),
            t: self.t,
        }
    }

    pub fn is_annotated(&self) -> bool {
        !self.cause_indices.is_empty()
    }
}

/// Identity of a history-response pair: `(dialogue_id, t)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PairKey {
    pub dialogue_id: String,
    pub t: usize,
}

impl fmt::Display for PairKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.dialogue_id, self.t)
    }
}

/// Which speaker produces the responses enumerated by [`enumerate_pairs`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Responder {
    Any,
    Speaker(Speaker),
}

impl Responder {
    fn matches(self, speaker: Speaker) -> bool {
        match self {
            Responder::Any => true,
            Responder::Speaker(s) => s == speaker,
        }
    }
}

/// One unlabeled pair per responder utterance at index `t >= 1`.
pub fn enumerate_pairs(dialogue: &Dialogue, responder: Responder) -> Vec<HistoryResponsePair> {
    dialogue
        .utterances
        .iter()
        .skip(1)
        .filter(|u| responder.matches(u.speaker))
        .map(|u| HistoryResponsePair::unlabeled(dialogue.id.clone(), u.index))
        .collect()
}

/// A set of dialogues indexed by id.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    dialogues: Vec<Dialogue>,
    index: HashMap<String, usize>,
}

impl Corpus {
    /// Panics on duplicate dialogue ids; use [`parse_corpus`] for untrusted input.
    pub fn new(dialogues: Vec<Dialogue>) -> Self {
        let mut corpus = Corpus::default();
        for d in dialogues {
            assert!(corpus.push(d).is_none(), "duplicate dialogue id in Corpus::new");
        }
        corpus
    }

    /// Adds a dialogue; returns it back if its id is already taken.
    pub fn push(&mut self, dialogue: Dialogue) -> Option<Dialogue> {
        if self.index.contains_key(&dialogue.id) {
            return Some(dialogue);
        }
        self.index.insert(dialogue.id.clone(), self.dialogues.len());
        self.dialogues.push(dialogue);
        None
    }

    pub fn dialogues(&self) -> &[Dialogue] {
        &self.dialogues
    }

    pub fn len(&self) -> usize {
        self.dialogues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dialogues.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Dialogue> {
        self.index.get(id).map(|&i| &self.dialogues[i])
    }

    /// The dialogue and response position of a pair, if it resolves.
    pub fn resolve(&self, pair: &HistoryResponsePair) -> Option<&Dialogue> {
        self.get(&pair.dialogue_id).filter(|d| pair.t >= 1 && pair.t < d.len())
    }

    pub fn history(&self, pair: &HistoryResponsePair) -> Option<&[Utterance]> {
        self.resolve(pair).map(|d| &d.utterances[..pair.t])
    }

    pub fn response(&self, pair: &HistoryResponsePair) -> Option<&Utterance> {
        self.resolve(pair).map(|d| &d.utterances[pair.t])
    }

    /// All pairs of all dialogues for the given responder, unlabeled.
    pub fn enumerate_pairs(&self, responder: Responder) -> Vec<HistoryResponsePair> {
        self.dialogues
            .iter()
            .flat_map(|d| enumerate_pairs(d, responder))
            .collect()
    }

    /// Restriction to the dialogues with the given ids, in this corpus' order.
    pub fn subset(&self, ids: &BTreeSet<String>) -> Corpus {
        Corpus::new(self.dialogues.iter().filter(|d| ids.contains(&d.id)).cloned().collect())
    }

    /// Concatenation; dialogues from `other` whose id already exists are dropped.
    pub fn merged(&self, other: &Corpus) -> Corpus {
        let mut out = self.clone();
        for d in other.dialogues() {
            out.push(d.clone());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn alternating(n: usize) -> Dialogue {
        Dialogue::from_turns(
            "d",
            Source::Other,
            (0..n).map(|i| {
                let speaker = if i % 2 == 0 {
                    Speaker::Seeker
                } else {
                    Speaker::Supporter
                };
                (speaker, format!("utterance {i}"))
            }),
        )
    }

    #[test]
    fn enumerate_supporter_turns() {
        let mut d = alternating(7);
        // supporter responds at 2, 4, 6 in this example
        for u in &mut d.utterances {
            u.speaker = if u.index % 2 == 0 {
                Speaker::Supporter
            } else {
                Speaker::Seeker
            };
        }
        let pairs = enumerate_pairs(&d, Responder::Speaker(Speaker::Supporter));
        let ts: Vec<usize> = pairs.iter().map(|p| p.t).collect();
        assert_eq!(ts, vec![2, 4, 6]);
        assert!(pairs.iter().all(|p| p.cause_indices.is_empty()));
    }

    #[test]
    fn enumerate_two_utterances() {
        let d = alternating(2);
        let pairs = enumerate_pairs(&d, Responder::Any);
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].t, 1);
    }

    #[test]
    fn enumerate_no_match() {
        let d = alternating(2);
        assert!(enumerate_pairs(&d, Responder::Speaker(Speaker::Seeker)).is_empty());
        assert!(enumerate_pairs(&d, Responder::Speaker(Speaker::GenericB)).is_empty());
    }

    #[test]
    fn resolve_rejects_out_of_range() {
        let corpus = Corpus::new(vec![alternating(3)]);
        assert!(corpus.resolve(&HistoryResponsePair::unlabeled("d", 2)).is_some());
        assert!(corpus.resolve(&HistoryResponsePair::unlabeled("d", 3)).is_none());
        assert!(corpus.resolve(&HistoryResponsePair::unlabeled("d", 0)).is_none());
        assert!(corpus.resolve(&HistoryResponsePair::unlabeled("x", 1)).is_none());
        let hist = corpus.history(&HistoryResponsePair::unlabeled("d", 2)).unwrap();
        assert_eq!(hist.len(), 2);
    }
}
