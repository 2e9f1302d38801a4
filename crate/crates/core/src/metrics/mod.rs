//! Agreement, overlap, diversity and significance measures.

mod agreement;
mod bleu;
mod bws;
mod diversity;
mod ttest;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use agreement::{cohen_kappa, span_f1, Kappa};
pub use bleu::{average_bleu, bleu, self_bleu};
pub use bws::{bws_by_metric, bws_scores, read_bws_csv, BwsMetric, BwsRecord, Judgment};
pub use diversity::distinct_n;
pub use ttest::{student_t_two_sided_p, two_sample_t_test, SignificanceResult, ALPHA};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("inputs have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    EmptyInput,
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("records span several experiments: {0:?} and {1:?}")]
    MixedExperiments(String, String),
    #[error("invalid record: {0}")]
    InvalidRecord(String),
}

pub type Result<T, E = MetricsError> = std::result::Result<T, E>;

/// Binary confusion counts with derived precision, recall and F1.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn add(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Precision, recall and F1 with the counts they came from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl From<&Confusion> for Prf {
    fn from(c: &Confusion) -> Self {
        Prf {
            precision: c.precision(),
            recall: c.recall(),
            f1: c.f1(),
        }
    }
}
