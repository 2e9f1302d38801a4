//! Welch's unequal-variance two-sample t-test.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::{MetricsError, Result};

/// Significance level.
pub const ALPHA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignificanceResult {
    pub t_statistic: f64,
    pub p_value: f64,
    pub df: f64,
    pub significant: bool,
    /// Both samples had zero variance; `t` and `p` follow the convention
    /// (equal means: t = 0, p = 1; otherwise t = ±inf, p = 0).
    pub degenerate: bool,
}

/// Two-sided p-value of a Student-t statistic with `df` degrees of freedom.
pub fn student_t_two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    match StudentsT::new(0.0, 1.0, df) {
        Ok(dist) => (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0),
        Err(_) => f64::NAN,
    }
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

pub fn two_sample_t_test(a: &[f64], b: &[f64]) -> Result<SignificanceResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(MetricsError::DegenerateInput(format!(
            "t-test needs at least 2 values per sample, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(MetricsError::DegenerateInput("non-finite sample value".into()));
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let sa = va / na;
    let sb = vb / nb;
    if sa + sb == 0.0 {
        let (t, p) = if ma == mb {
            (0.0, 1.0)
        } else if ma > mb {
            (f64::INFINITY, 0.0)
        } else {
            (f64::NEG_INFINITY, 0.0)
        };
        return Ok(SignificanceResult {
            t_statistic: t,
            p_value: p,
            df: na + nb - 2.0,
            significant: p <= ALPHA,
            degenerate: true,
        });
    }
    let t = (ma - mb) / (sa + sb).sqrt();
    let df = (sa + sb).powi(2) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    let p = student_t_two_sided_p(t, df);
    Ok(SignificanceResult {
        t_statistic: t,
        p_value: p,
        df,
        significant: p <= ALPHA,
        degenerate: false,
    })
}
