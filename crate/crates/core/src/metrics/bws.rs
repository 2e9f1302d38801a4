//! Best-Worst Scaling over pairwise judgments.

use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};

use super::{MetricsError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BwsMetric {
    Empathy,
    Fluency,
    Informativeness,
    Relevance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Judgment {
    ABest,
    BBest,
    Tie,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BwsRecord {
    pub experiment_id: String,
    pub item_id: String,
    pub system_a: String,
    pub system_b: String,
    pub metric: BwsMetric,
    pub judgments: Vec<Judgment>,
}

#[derive(Deserialize)]
struct Row {
    experiment_id: String,
    item_id: String,
    system_a: String,
    system_b: String,
    metric: BwsMetric,
    #[allow(dead_code)]
    rater_id: String,
    judgment: Judgment,
}

/// Reads `experiment_id,item_id,system_a,system_b,metric,rater_id,judgment`
/// rows and groups them into one record per (experiment, item, systems, metric),
/// in order of first appearance.
pub fn read_bws_csv<R: Read>(reader: R) -> Result<Vec<BwsRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut records: Vec<BwsRecord> = Vec::new();
    let mut index: BTreeMap<(String, String, String, String, BwsMetric), usize> = BTreeMap::new();
    for (i, row) in rdr.deserialize::<Row>().enumerate() {
        let row = row.map_err(|e| MetricsError::InvalidRecord(format!("row {}: {e}", i + 1)))?;
        if row.system_a == row.system_b {
            return Err(MetricsError::InvalidRecord(format!(
                "row {}: system_a and system_b are both {:?}",
                i + 1,
                row.system_a
            )));
        }
        let key = (
            row.experiment_id.clone(),
            row.item_id.clone(),
            row.system_a.clone(),
            row.system_b.clone(),
            row.metric,
        );
        let k = *index.entry(key).or_insert_with(|| {
            records.push(BwsRecord {
                experiment_id: row.experiment_id,
                item_id: row.item_id,
                system_a: row.system_a,
                system_b: row.system_b,
                metric: row.metric,
                judgments: Vec::new(),
            });
            records.len() - 1
        });
        records[k].judgments.push(row.judgment);
    }
    Ok(records)
}

/// Times rated best minus times rated worst, per system.
pub fn bws_scores(records: &[BwsRecord]) -> Result<BTreeMap<String, i64>> {
    let mut scores = BTreeMap::new();
    let Some(first) = records.first() else {
        return Ok(scores);
    };
    for r in records {
        if r.experiment_id != first.experiment_id {
            return Err(MetricsError::MixedExperiments(
                first.experiment_id.clone(),
                r.experiment_id.clone(),
            ));
        }
        if r.system_a == r.system_b {
            return Err(MetricsError::InvalidRecord(format!(
                "item {:?} compares {:?} with itself",
                r.item_id, r.system_a
            )));
        }
        if r.judgments.is_empty() {
            return Err(MetricsError::InvalidRecord(format!(
                "item {:?} has no judgments",
                r.item_id
            )));
        }
        let mut delta = 0i64;
        for j in &r.judgments {
            match j {
                Judgment::ABest => delta += 1,
                Judgment::BBest => delta -= 1,
                Judgment::Tie => {}
            }
        }
        *scores.entry(r.system_a.clone()).or_insert(0) += delta;
        *scores.entry(r.system_b.clone()).or_insert(0) -= delta;
    }
    Ok(scores)
}

/// [`bws_scores`] computed separately for each metric.
pub fn bws_by_metric(records: &[BwsRecord]) -> Result<BTreeMap<BwsMetric, BTreeMap<String, i64>>> {
    let mut grouped: BTreeMap<BwsMetric, Vec<BwsRecord>> = BTreeMap::new();
    for r in records {
        grouped.entry(r.metric).or_default().push(r.clone());
    }
    grouped
        .into_iter()
        .map(|(m, rs)| bws_scores(&rs).map(|s| (m, s)))
        .collect()
}
