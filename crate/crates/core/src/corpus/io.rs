//! Corpus JSONL: one dialogue per line.
//!
//! ```text
//! {"id": str, "source": str,
//!  "utterances": [{"speaker": str, "text": str, "clause_spans": [[int,int], ...]?}],
//!  "annotations": [{"t": int, "causes": [{"u": int, "spans": [[int,int], ...]?}]}]}
//! ```
//!
//! Span offsets are character offsets into the utterance text. Unknown fields
//! are ignored and reported as warnings.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Corpus, CorpusError, Dialogue, HistoryResponsePair, Result, Source, Speaker, Utterance};
use crate::text::{char_len, Span};

/// Parsed corpus file.
#[derive(Debug, Clone, Default)]
pub struct Loaded {
    pub corpus: Corpus,
    pub pairs: Vec<HistoryResponsePair>,
    pub warnings: Vec<String>,
}

#[derive(Deserialize)]
struct RawDialogue {
    id: String,
    #[serde(default)]
    source: Option<String>,
    utterances: Vec<RawUtterance>,
    #[serde(default)]
    annotations: Vec<RawAnnotation>,
    #[serde(flatten)]
    extra: BTreeMap<String, Value>,
}

#[derive(Deserialize)]
struct RawUtterance {
    speaker: String,
    text: String,
    #[serde(default)]
    clause_spans: Option<Vec<(usize, usize)>>,
    #[serde(flatten)]
    extra: BTreeMap<String, Value>,
}

#[derive(Deserialize)]
struct RawAnnotation {
    t: i64,
    causes: Vec<RawCause>,
    #[serde(flatten)]
    extra: BTreeMap<String, Value>,
}

#[derive(Deserialize)]
struct RawCause {
    u: i64,
    #[serde(default)]
    spans: Option<Vec<(usize, usize)>>,
    #[serde(flatten)]
    extra: BTreeMap<String, Value>,
}

#[derive(Serialize)]
struct OutDialogue<'a> {
    id: &'a str,
    source: &'static str,
    utterances: Vec<OutUtterance<'a>>,
    annotations: Vec<OutAnnotation>,
}

#[derive(Serialize)]
struct OutUtterance<'a> {
    speaker: &'static str,
    text: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    clause_spans: Option<Vec<(usize, usize)>>,
}

#[derive(Serialize)]
struct OutAnnotation {
    t: usize,
    causes: Vec<OutCause>,
}

#[derive(Serialize)]
struct OutCause {
    u: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    spans: Option<Vec<(usize, usize)>>,
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Loaded> {
    let file = File::open(path.as_ref())?;
    parse_corpus(BufReader::new(file))
}

pub fn parse_corpus<R: Read>(reader: R) -> Result<Loaded> {
    let mut loaded = Loaded::default();
    let reader = BufReader::new(reader);
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawDialogue = serde_json::from_str(&line).map_err(|e| CorpusError::MalformedRecord {
            line: line_no,
            reason: e.to_string(),
        })?;
        let (dialogue, pairs) = convert(raw, line_no, &mut loaded.warnings)?;
        if let Some(dup) = loaded.corpus.push(dialogue) {
            return Err(malformed(line_no, format!("duplicate dialogue id {:?}", dup.id)));
        }
        loaded.pairs.extend(pairs);
    }
    for w in &loaded.warnings {
        log::warn!("{w}");
    }
    Ok(loaded)
}

fn malformed(line: usize, reason: impl Into<String>) -> CorpusError {
    CorpusError::MalformedRecord {
        line,
        reason: reason.into(),
    }
}

fn warn_extra(warnings: &mut Vec<String>, line: usize, what: &str, extra: &BTreeMap<String, Value>) {
    for key in extra.keys() {
        warnings.push(format!("line {line}: ignoring unknown {what} field {key:?}"));
    }
}

fn to_spans(line: usize, text: &str, raw: &[(usize, usize)], what: &str) -> Result<Vec<Span>> {
    let len = char_len(text);
    let mut spans: Vec<Span> = raw.iter().map(|&(s, e)| Span::new(s, e)).collect();
    for s in &spans {
        if s.start > s.end || s.end > len {
            return Err(malformed(
                line,
                format!("{what} span [{}, {}) outside text of length {len}", s.start, s.end),
            ));
        }
    }
    let mut sorted = spans.clone();
    sorted.sort();
    if sorted.windows(2).any(|w| w[1].start < w[0].end) {
        return Err(malformed(line, format!("{what} spans overlap")));
    }
    spans.shrink_to_fit();
    Ok(spans)
}

fn convert(raw: RawDialogue, line: usize, warnings: &mut Vec<String>) -> Result<(Dialogue, Vec<HistoryResponsePair>)> {
    warn_extra(warnings, line, "dialogue", &raw.extra);
    if raw.id.is_empty() {
        return Err(malformed(line, "empty dialogue id"));
    }
    if raw.utterances.len() < 2 {
        return Err(malformed(
            line,
            format!(
                "dialogue {:?} has {} utterance(s); at least 2 required",
                raw.id,
                raw.utterances.len()
            ),
        ));
    }
    let source = match raw.source.as_deref() {
        None => Source::Other,
        Some(s) => {
            let (source, known) = Source::parse_lenient(s);
            if !known {
                warnings.push(format!("line {line}: unknown source {s:?}, using \"other\""));
            }
            source
        }
    };
    let mut utterances = Vec::with_capacity(raw.utterances.len());
    for (index, u) in raw.utterances.into_iter().enumerate() {
        warn_extra(warnings, line, "utterance", &u.extra);
        let speaker: Speaker = u
            .speaker
            .parse()
            .map_err(|e: String| malformed(line, format!("utterance {index}: {e}")))?;
        let clause_spans = match &u.clause_spans {
            None => None,
            Some(raw_spans) => Some(to_spans(
                line,
                &u.text,
                raw_spans,
                &format!("utterance {index} clause"),
            )?),
        };
        utterances.push(Utterance {
            index,
            speaker,
            text: u.text,
            clause_spans,
        });
    }

    let mut pairs = Vec::with_capacity(raw.annotations.len());
    let mut seen_t = BTreeSet::new();
    for ann in raw.annotations {
        warn_extra(warnings, line, "annotation", &ann.extra);
        let dangling = |reason: String| CorpusError::DanglingAnnotation {
            line,
            dialogue_id: raw.id.clone(),
            reason,
        };
        if ann.t < 1 || ann.t as usize >= utterances.len() {
            return Err(dangling(format!(
                "response index t={} outside 1..{}",
                ann.t,
                utterances.len()
            )));
        }
        let t = ann.t as usize;
        if !seen_t.insert(t) {
            return Err(malformed(line, format!("duplicate annotation for t={t}")));
        }
        if ann.causes.is_empty() {
            return Err(malformed(line, format!("annotation t={t} has no causes")));
        }
        let mut pair = HistoryResponsePair::unlabeled(raw.id.clone(), t);
        for cause in ann.causes {
            warn_extra(warnings, line, "cause", &cause.extra);
            if cause.u < 0 || cause.u as usize >= t {
                return Err(dangling(format!("cause index {} not in history of t={t}", cause.u)));
            }
            let j = cause.u as usize;
            if !pair.cause_indices.insert(j) {
                return Err(malformed(line, format!("duplicate cause {j} for t={t}")));
            }
            if let Some(raw_spans) = &cause.spans {
                let spans = to_spans(line, &utterances[j].text, raw_spans, &format!("cause u={j} of t={t}"))?;
                pair.cause_spans.insert(j, spans);
            }
        }
        pairs.push(pair);
    }
    pairs.sort_by_key(|p| p.t);
    Ok((
        Dialogue {
            id: raw.id,
            source,
            utterances,
        },
        pairs,
    ))
}

/// Writes every dialogue of `corpus` with the annotations found in `pairs`.
///
/// Pairs whose dialogue is not in the corpus are ignored; unannotated pairs are
/// not written.
pub fn write_corpus<W: Write>(mut writer: W, corpus: &Corpus, pairs: &[HistoryResponsePair]) -> Result<()> {
    let mut by_dialogue: BTreeMap<&str, Vec<&HistoryResponsePair>> = BTreeMap::new();
    for p in pairs.iter().filter(|p| p.is_annotated()) {
        by_dialogue.entry(p.dialogue_id.as_str()).or_default().push(p);
    }
    for d in corpus.dialogues() {
        let mut anns = by_dialogue.remove(d.id.as_str()).unwrap_or_default();
        anns.sort_by_key(|p| p.t);
        let out = OutDialogue {
            id: &d.id,
            source: d.source.as_str(),
            utterances: d
                .utterances
                .iter()
                .map(|u| OutUtterance {
                    speaker: u.speaker.as_str(),
                    text: &u.text,
                    clause_spans: u
                        .clause_spans
                        .as_ref()
                        .map(|s| s.iter().map(|s| (s.start, s.end)).collect()),
                })
                .collect(),
            annotations: anns
                .into_iter()
                .map(|p| OutAnnotation {
                    t: p.t,
                    causes: p
                        .cause_indices
                        .iter()
                        .map(|&u| OutCause {
                            u,
                            spans: p
                                .cause_spans
                                .get(&u)
                                .map(|s| s.iter().map(|s| (s.start, s.end)).collect()),
                        })
                        .collect(),
                })
                .collect(),
        };
        serde_json::to_writer(&mut writer, &out).map_err(std::io::Error::other)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn save_corpus(path: impl AsRef<Path>, corpus: &Corpus, pairs: &[HistoryResponsePair]) -> Result<()> {
    let file = File::create(path.as_ref())?;
    write_corpus(BufWriter::new(file), corpus, pairs)
}
