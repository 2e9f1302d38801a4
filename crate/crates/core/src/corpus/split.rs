use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{CorpusError, HistoryResponsePair, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

impl SplitRatios {
    pub fn new(train: f64, valid: f64, test: f64) -> Self {
        Self { train, valid, test }
    }

    fn validate(&self) -> Result<()> {
        let r = [self.train, self.valid, self.test];
        if r.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(CorpusError::InvalidRatios(format!(
                "ratios must be non-negative, got {r:?}"
            )));
        }
        let sum: f64 = r.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(CorpusError::InvalidRatios(format!("ratios sum to {sum}, expected 1")));
        }
        Ok(())
    }
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self::new(0.8, 0.1, 0.1)
    }
}

/// Pairs partitioned at dialogue granularity.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CorpusSplit {
    pub train: Vec<HistoryResponsePair>,
    pub valid: Vec<HistoryResponsePair>,
    pub test: Vec<HistoryResponsePair>,
}

impl CorpusSplit {
    pub fn dialogue_ids(pairs: &[HistoryResponsePair]) -> BTreeSet<String> {
        pairs.iter().map(|p| p.dialogue_id.clone()).collect()
    }
}

/// Largest-remainder apportionment of `n` items over `ratios`.
fn apportion(n: usize, ratios: [f64; 3]) -> [usize; 3] {
    let quotas: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut counts = [0usize; 3];
    for (c, q) in counts.iter_mut().zip(&quotas) {
        *c = q.floor() as usize;
    }
    let mut rest = n - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..3).collect();
    // stable: earlier split wins equal remainders
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for i in order {
        if rest == 0 {
            break;
        }
        if ratios[i] > 0.0 {
            counts[i] += 1;
            rest -= 1;
        }
    }
    counts
}

/// Shuffles the distinct dialogues of `pairs` with the `split` seed stream and
/// cuts them by `ratios`. Pairs keep their input order within each split.
pub fn split_corpus(pairs: &[HistoryResponsePair], ratios: SplitRatios, seed: u64) -> Result<CorpusSplit> {
    ratios.validate()?;
    let mut ids: Vec<String> = CorpusSplit::dialogue_ids(pairs).into_iter().collect();
    let counts = apportion(ids.len(), [ratios.train, ratios.valid, ratios.test]);
    if let Some(i) = counts.iter().position(|&c| c == 0) {
        let name = ["train", "valid", "test"][i];
        return Err(CorpusError::InsufficientData(format!(
            "{} dialogue(s) leave the {name} split empty",
            ids.len()
        )));
    }
    let mut rng = seed::rng(seed, seed::SPLIT, &[]);
    ids.shuffle(&mut rng);
    let mut assignment = BTreeMap::new();
    for (k, id) in ids.into_iter().enumerate() {
        let part = if k < counts[0] {
            0
        } else if k < counts[0] + counts[1] {
            1
        } else {
            2
        };
        assignment.insert(id, part);
    }
    let mut split = CorpusSplit::default();
    for p in pairs {
        match assignment[&p.dialogue_id] {
            0 => split.train.push(p.clone()),
            1 => split.valid.push(p.clone()),
            _ => split.test.push(p.clone()),
        }
    }
    Ok(split)
}
