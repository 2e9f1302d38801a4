use std::collections::HashSet;

use super::{MetricsError, Result};

/// Unique n-grams over total n-grams, pooled across outputs.
///
/// N-grams never span two outputs.
pub fn distinct_n<S: AsRef<str>>(outputs: &[Vec<S>], n: usize) -> Result<f64> {
    if n == 0 {
        return Err(MetricsError::DegenerateInput("n must be at least 1".into()));
    }
    let mut unique = HashSet::new();
    let mut total = 0usize;
    for out in outputs {
        if out.len() < n {
            continue;
        }
        for w in out.windows(n) {
            unique.insert(w.iter().map(|s| s.as_ref()).collect::<Vec<&str>>());
            total += 1;
        }
    }
    if total == 0 {
        return Err(MetricsError::DegenerateInput(format!(
            "no {n}-grams in {} output(s)",
            outputs.len()
        )));
    }
    Ok(unique.len() as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cases() {
        assert_eq!(distinct_n(&[vec!["a", "a", "a", "a"]], 1).unwrap(), 0.25);
        assert_eq!(distinct_n(&[vec!["a", "b"], vec!["c"]], 1).unwrap(), 1.0);
        assert!(distinct_n(&[vec!["a"]], 2).is_err());
        assert!(distinct_n::<&str>(&[], 1).is_err());
    }
}
