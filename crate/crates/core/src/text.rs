//! Whitespace tokenization shared by statistics, metrics and the reference encoder.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

/// Half-open character range `[start, end)` within an utterance.
///
/// Offsets count Unicode scalar values, not bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

pub fn tokens(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

pub fn token_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Whitespace tokens with their character ranges.
pub fn token_spans(text: &str) -> Vec<Span> {
    let mut out = Vec::new();
    let mut start = None;
    let mut pos = 0;
    for ch in text.chars() {
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                out.push(Span::new(s, pos));
            }
        } else if start.is_none() {
            start = Some(pos);
        }
        pos += 1;
    }
    if let Some(s) = start {
        out.push(Span::new(s, pos));
    }
    out
}

/// Indices of the whitespace tokens that intersect any of `spans`.
pub fn tokens_in_spans(text: &str, spans: &[Span]) -> BTreeSet<usize> {
    token_spans(text)
        .iter()
        .enumerate()
        .filter(|(_, tok)| spans.iter().any(|s| s.start < tok.end && tok.start < s.end))
        .map(|(i, _)| i)
        .collect()
}

pub fn char_len(text: &str) -> usize {
    text.chars().count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn token_spans_cover_words() {
        let spans = token_spans("  ab c\tdé ");
        assert_eq!(spans, vec![Span::new(2, 4), Span::new(5, 6), Span::new(7, 9)]);
    }

    #[test]
    fn span_intersection_selects_tokens() {
        let text = "I lost my job last week";
        // "my job" is characters 7..13
        let idx = tokens_in_spans(text, &[Span::new(7, 13)]);
        assert_eq!(idx.into_iter().collect::<Vec<_>>(), vec![2, 3]);
        assert!(tokens_in_spans(text, &[]).is_empty());
    }
}
