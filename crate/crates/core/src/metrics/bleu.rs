//! Sentence-level BLEU.
//!
//! Modified n-gram precision (counts clipped by the maximum count in any single
//! reference) with a brevity penalty against the reference length closest to
//! the hypothesis length (shorter reference on ties).
//!
//! Orders longer than the hypothesis are left out of the geometric mean, so a
//! hypothesis always scores 1 against itself (the empty hypothesis included). An order with zero matches,
//! other than unigrams, gets precision `1 / (2 * hypothesis_len)`; zero unigram
//! matches score 0.

use std::collections::HashMap;

use super::{MetricsError, Result};

fn ngram_counts<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            let key: Vec<&str> = w.iter().map(|s| s.as_ref()).collect();
            *counts.entry(key).or_insert(0) += 1;
        }
    }
    counts
}

fn clipped_precision<S: AsRef<str>, R: AsRef<str>>(hyp: &[S], refs: &[Vec<R>], n: usize) -> (usize, usize) {
    let hyp_counts = ngram_counts(hyp, n);
    let mut max_ref: HashMap<Vec<&str>, usize> = HashMap::new();
    for r in refs {
        for (g, c) in ngram_counts(r, n) {
            let e = max_ref.entry(g).or_insert(0);
            *e = (*e).max(c);
        }
    }
    let matched = hyp_counts
        .iter()
        .map(|(g, &c)| c.min(max_ref.get(g).copied().unwrap_or(0)))
        .sum();
    (matched, hyp.len() + 1 - n)
}

fn closest_ref_len<R>(hyp_len: usize, refs: &[Vec<R>]) -> usize {
    refs.iter()
        .map(|r| r.len())
        .min_by_key(|&l| (l.abs_diff(hyp_len), l))
        .unwrap_or(0)
}

/// BLEU with uniform weights over orders `1..=max_order`.
pub fn bleu<S: AsRef<str>, R: AsRef<str>>(hypothesis: &[S], references: &[Vec<R>], max_order: usize) -> f64 {
    assert!(max_order >= 1, "max_order must be at least 1");
    if references.is_empty() {
        return 0.0;
    }
    if hypothesis.is_empty() {
        return if references.iter().any(|r| r.is_empty()) {
            1.0
        } else {
            0.0
        };
    }
    let c = hypothesis.len();
    let orders = max_order.min(c);
    let mut log_sum = 0.0;
    for n in 1..=orders {
        let (matched, total) = clipped_precision(hypothesis, references, n);
        let p = if matched > 0 {
            matched as f64 / total as f64
        } else if n == 1 {
            return 0.0;
        } else {
            1.0 / (2.0 * c as f64)
        };
        log_sum += p.ln();
    }
    let r = closest_ref_len(c, references);
    let bp = if c > r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    (bp * (log_sum / orders as f64).exp()).clamp(0.0, 1.0)
}

/// Mean of BLEU-1 through BLEU-4.
pub fn average_bleu<S: AsRef<str>, R: AsRef<str>>(hypothesis: &[S], references: &[Vec<R>]) -> f64 {
    (1..=4).map(|n| bleu(hypothesis, references, n)).sum::<f64>() / 4.0
}

/// Mean over candidates of `average_bleu(candidate, other candidates)`.
pub fn self_bleu<S: AsRef<str>>(candidates: &[Vec<S>]) -> Result<f64> {
    if candidates.len() < 2 {
        return Err(MetricsError::DegenerateInput(format!(
            "self-BLEU needs at least 2 candidates, got {}",
            candidates.len()
        )));
    }
    let mut sum = 0.0;
    for (i, cand) in candidates.iter().enumerate() {
        let others: Vec<Vec<&str>> = candidates
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != i)
            .map(|(_, c)| c.iter().map(|s| s.as_ref()).collect())
            .collect();
        sum += average_bleu(cand, &others);
    }
    Ok(sum / candidates.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn identity_is_one() {
        for s in ["a", "a b", "the cat sat on the mat"] {
            for n in 1..=4 {
                assert_eq!(bleu(&t(s), &[t(s)], n), 1.0, "{s} order {n}");
            }
        }
    }

    #[test]
    fn clipped_unigram() {
        // 1 of 3 "the" tokens is matched; hypothesis longer than reference
        let v = bleu(&t("the the the"), &[t("the cat")], 1);
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn empty_cases() {
        assert_eq!(bleu::<&str, &str>(&[], &[t("a")], 4), 0.0);
        assert_eq!(bleu::<&str, &str>(&[], &[t("")], 4), 1.0);
        assert_eq!(bleu(&t("x y"), &[t("a b")], 2), 0.0);
    }

    #[test]
    fn self_bleu_bounds() {
        let same = vec![t("a b c"), t("a b c"), t("a b c")];
        assert_eq!(self_bleu(&same).unwrap(), 1.0);
        let disjoint = vec![t("a b"), t("c d"), t("e f")];
        assert_eq!(self_bleu(&disjoint).unwrap(), 0.0);
        assert!(self_bleu(&[t("a")]).is_err());
    }
}
