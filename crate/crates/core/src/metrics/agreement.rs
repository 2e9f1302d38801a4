use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{MetricsError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kappa {
    pub kappa: f64,
    /// Expected agreement was 1 (both raters constant and identical); `kappa`
    /// is then reported as 1 by convention.
    pub degenerate: bool,
}

/// Cohen's kappa for two binary raters.
pub fn cohen_kappa(a: &[bool], b: &[bool]) -> Result<Kappa> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let n = a.len() as f64;
    let agree = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64;
    let pa = a.iter().filter(|&&x| x).count() as f64 / n;
    let pb = b.iter().filter(|&&x| x).count() as f64 / n;
    let p_o = agree / n;
    let p_e = pa * pb + (1.0 - pa) * (1.0 - pb);
    if (1.0 - p_e).abs() < f64::EPSILON {
        return Ok(Kappa {
            kappa: 1.0,
            degenerate: true,
        });
    }
    Ok(Kappa {
        kappa: (p_o - p_e) / (1.0 - p_e),
        degenerate: false,
    })
}

fn pair_f1(a: &BTreeSet<usize>, b: &BTreeSet<usize>) -> f64 {
    match (a.is_empty(), b.is_empty()) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        _ => 2.0 * a.intersection(b).count() as f64 / (a.len() + b.len()) as f64,
    }
}

/// Token-overlap F1 averaged over all unordered annotator pairs.
pub fn span_f1(annotators: &[BTreeSet<usize>]) -> Result<f64> {
    if annotators.len() < 2 {
        return Err(MetricsError::DegenerateInput(format!(
            "span F1 needs at least 2 annotators, got {}",
            annotators.len()
        )));
    }
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..annotators.len() {
        for j in i + 1..annotators.len() {
            sum += pair_f1(&annotators[i], &annotators[j]);
            pairs += 1;
        }
    }
    Ok(sum / pairs as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bits(v: &[u8]) -> Vec<bool> {
        v.iter().map(|&x| x == 1).collect()
    }

    #[test]
    fn kappa_cases() {
        let k = cohen_kappa(&bits(&[1, 1, 0, 0]), &bits(&[1, 0, 1, 0])).unwrap();
        assert_eq!(k.kappa, 0.0);
        let k = cohen_kappa(&bits(&[1, 0, 1]), &bits(&[1, 0, 1])).unwrap();
        assert_eq!(k.kappa, 1.0);
        assert!(!k.degenerate);
        let k = cohen_kappa(&bits(&[1, 1]), &bits(&[1, 1])).unwrap();
        assert!(k.degenerate);
        assert_eq!(k.kappa, 1.0);
        assert!(cohen_kappa(&[], &[]).is_err());
        assert!(cohen_kappa(&[true], &[true, false]).is_err());
    }

    #[test]
    fn span_cases() {
        let a: BTreeSet<usize> = (1..=10).collect();
        let b: BTreeSet<usize> = (6..=15).collect();
        assert_eq!(span_f1(&[a.clone(), b]).unwrap(), 0.5);
        let far: BTreeSet<usize> = (100..105).collect();
        let v = span_f1(&[a.clone(), a.clone(), far]).unwrap();
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(span_f1(&[BTreeSet::new(), BTreeSet::new()]).unwrap(), 1.0);
        assert_eq!(span_f1(&[BTreeSet::new(), a.clone()]).unwrap(), 0.0);
        assert!(span_f1(&[a]).is_err());
    }
}
