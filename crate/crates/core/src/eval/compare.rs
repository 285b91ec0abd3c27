use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::{recall_at_k, MetricsReport, Qrels};
use crate::datamodel::ResultRecord;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize)]
pub struct CompareReport {
    /// `reranked - coarse`, in percentage points, per k.
    pub deltas: BTreeMap<usize, f64>,
    pub improved: usize,
    pub degraded: usize,
    pub unchanged: usize,
    pub coarse: MetricsReport,
    pub reranked: MetricsReport,
}

pub fn compare_runs(
    coarse: &[ResultRecord],
    reranked: &[ResultRecord],
    qrels: &Qrels,
    ks: &[usize],
) -> Result<CompareReport> {
    let a: BTreeSet<&str> = coarse.iter().map(|r| r.query_id.as_str()).collect();
    let b: BTreeSet<&str> = reranked.iter().map(|r| r.query_id.as_str()).collect();
    if a != b {
        let diff: Vec<&str> = a.symmetric_difference(&b).copied().take(5).collect();
        return Err(Error::invalid(format!("runs cover different queries, e.g. {diff:?}")));
    }
    let coarse_report = recall_at_k(coarse, qrels, ks)?;
    let reranked_report = recall_at_k(reranked, qrels, ks)?;
    let deltas = ks
        .iter()
        .map(|&k| (k, reranked_report.recall_at[&k] - coarse_report.recall_at[&k]))
        .collect();
    let (mut improved, mut degraded, mut unchanged) = (0, 0, 0);
    for (q, before) in &coarse_report.first_hit {
        let after = reranked_report.first_hit[q];
        let key = |r: Option<usize>| r.unwrap_or(usize::MAX);
        match key(after).cmp(&key(*before)) {
            std::cmp::Ordering::Less => improved += 1,
            std::cmp::Ordering::Greater => degraded += 1,
            std::cmp::Ordering::Equal => unchanged += 1,
        }
    }
    Ok(CompareReport {
        deltas,
        improved,
        degraded,
        unchanged,
        coarse: coarse_report,
        reranked: reranked_report,
    })
}
