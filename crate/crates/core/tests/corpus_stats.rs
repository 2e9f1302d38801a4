use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde_json::Value;

use causal_dialog::corpus::{corpus_stats, load_corpus, parse_corpus, write_corpus};

fn fixture_path() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/five_dialogues.jsonl")
}

/// Statistics recomputed from the raw records.
struct Oracle {
    n_pairs: usize,
    n_utterances: usize,
    n_cause_utterances: usize,
    per_response: BTreeMap<usize, f64>,
    proximity: BTreeMap<usize, f64>,
    mean_len: f64,
    mean_prop: f64,
}

fn oracle(text: &str) -> Oracle {
    let mut n_pairs = 0;
    let mut n_utt = 0;
    let mut cause_utts = BTreeSet::new();
    let mut per: BTreeMap<usize, usize> = BTreeMap::new();
    let mut prox: BTreeMap<usize, usize> = BTreeMap::new();
    let mut lens = Vec::new();
    let mut props = Vec::new();
    for line in text.lines() {
        let d: Value = serde_json::from_str(line).unwrap();
        let utts = d["utterances"].as_array().unwrap();
        n_utt += utts.len();
        for a in d["annotations"].as_array().unwrap() {
            n_pairs += 1;
            let t = a["t"].as_u64().unwrap() as usize;
            let causes = a["causes"].as_array().unwrap();
            *per.entry(causes.len()).or_default() += 1;
            for c in causes {
                let u = c["u"].as_u64().unwrap() as usize;
                cause_utts.insert((d["id"].as_str().unwrap().to_string(), u));
                *prox.entry(t - u).or_default() += 1;
                let words: Vec<(usize, usize)> = {
                    // char ranges of whitespace tokens
                    let s = utts[u]["text"].as_str().unwrap();
                    let mut out = Vec::new();
                    let mut start = None;
                    for (i, ch) in s.chars().enumerate() {
                        match (ch.is_whitespace(), start) {
                            (true, Some(b)) => {
                                out.push((b, i));
                                start = None;
                            }
                            (false, None) => start = Some(i),
                            _ => {}
                        }
                    }
                    if let Some(b) = start {
                        out.push((b, s.chars().count()));
                    }
                    out
                };
                let covered = match c.get("spans").and_then(|s| s.as_array()) {
                    Some(spans) if !spans.is_empty() => words
                        .iter()
                        .filter(|(ws, we)| {
                            spans.iter().any(|sp| {
                                let (a, b) = (sp[0].as_u64().unwrap() as usize, sp[1].as_u64().unwrap() as usize);
                                a < *we && *ws < b
                            })
                        })
                        .count(),
                    _ => words.len(),
                };
                lens.push(covered as f64);
                props.push(covered as f64 / words.len() as f64);
            }
        }
    }
    let norm = |m: BTreeMap<usize, usize>| {
        let total: usize = m.values().sum();
        m.into_iter().map(|(k, v)| (k, v as f64 / total as f64)).collect()
    };
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Oracle {
        n_pairs,
        n_utterances: n_utt,
        n_cause_utterances: cause_utts.len(),
        per_response: norm(per),
        proximity: norm(prox),
        mean_len: mean(&lens),
        mean_prop: mean(&props),
    }
}

#[test]
fn fixture_stats_match_oracle() {
    let text = fs::read_to_string(fixture_path()).unwrap();
    let o = oracle(&text);
    let loaded = load_corpus(fixture_path()).unwrap();
    let s = corpus_stats(&loaded.pairs, &loaded.corpus).unwrap();
    assert_eq!(s.n_dialogues, 5);
    assert_eq!(s.n_pairs, o.n_pairs);
    assert_eq!(s.n_utterances, o.n_utterances);
    assert_eq!(s.n_cause_utterances, o.n_cause_utterances);
    assert_eq!(
        s.causes_per_response_histogram.keys().collect::<Vec<_>>(),
        o.per_response.keys().collect::<Vec<_>>()
    );
    for (k, v) in &o.per_response {
        assert!((s.causes_per_response_histogram[k] - v).abs() < 1e-12);
    }
    for (k, v) in &o.proximity {
        assert!((s.proximity_histogram[k] - v).abs() < 1e-12, "distance {k}");
    }
    assert!((s.avg_cause_token_length.mean - o.mean_len).abs() < 1e-12);
    assert!((s.cause_proportion_in_utterance.mean - o.mean_prop).abs() < 1e-12);
    // the one span-annotated cause covers part of its utterance
    assert!(s.cause_proportion_in_utterance.mean < 1.0);
}

#[test]
fn fixture_round_trips() {
    let loaded = load_corpus(fixture_path()).unwrap();
    let mut buf = Vec::new();
    write_corpus(&mut buf, &loaded.corpus, &loaded.pairs).unwrap();
    let again = parse_corpus(buf.as_slice()).unwrap();
    assert_eq!(again.corpus.dialogues(), loaded.corpus.dialogues());
    assert_eq!(again.pairs, loaded.pairs);
}

#[test]
fn dangling_cause_is_rejected() {
    let bad = r#"{"id":"x","utterances":[{"speaker":"seeker","text":"a"},{"speaker":"supporter","text":"b"}],"annotations":[{"t":1,"causes":[{"u":1}]}]}"#;
    let err = parse_corpus(bad.as_bytes()).unwrap_err();
    assert!(err.to_string().contains("line 1"), "{err}");
}
