use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write;

use serde::Serialize;

use super::{LatencyStats, Qrels};
use crate::datamodel::{ResultRecord, ScoredId};
use crate::error::{Error, Result};

/// 1-based rank of the first relevant image, if any.
pub fn first_hit_rank(ranking: &[ScoredId], relevant: &BTreeSet<String>) -> Option<usize> {
    ranking.iter().position(|s| relevant.contains(&s.image_id)).map(|i| i + 1)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    /// Percentage of queries with a relevant image in the top k.
    pub recall_at: BTreeMap<usize, f64>,
    pub n_queries: usize,
    pub first_hit: BTreeMap<String, Option<usize>>,
    /// Requested k values longer than at least one ranking; those were
    /// evaluated over the available prefix.
    pub truncated_k: Vec<usize>,
    pub latency_ms: Option<LatencyStats>,
}

/// Report JSON written by `eval`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportJson {
    pub recall: BTreeMap<String, f64>,
    pub n_queries: usize,
    pub latency_ms: Option<LatencyJson>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub truncated_k: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencyJson {
    pub mean: f64,
    pub p99: f64,
}

impl MetricsReport {
    pub fn recall(&self, k: usize) -> Option<f64> {
        self.recall_at.get(&k).copied()
    }

    /// Queries whose first hit lies within the top `k`.
    pub fn hits_at(&self, k: usize) -> BTreeSet<&str> {
        self.first_hit
            .iter()
            .filter(|(_, r)| r.is_some_and(|r| r <= k))
            .map(|(q, _)| q.as_str())
            .collect()
    }

    pub fn to_json(&self) -> ReportJson {
        ReportJson {
            recall: self.recall_at.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            n_queries: self.n_queries,
            latency_ms: self.latency_ms.as_ref().map(|l| LatencyJson {
                mean: l.mean_ms,
                p99: l.p99_ms,
            }),
            truncated_k: self.truncated_k.clone(),
        }
    }
}

pub fn recall_at_k(results: &[ResultRecord], qrels: &Qrels, ks: &[usize]) -> Result<MetricsReport> {
    if ks.contains(&0) {
        return Err(Error::invalid("k must be >= 1"));
    }
    let mut seen = HashSet::with_capacity(results.len());
    let mut first_hit = BTreeMap::new();
    let mut shortest = usize::MAX;
    for r in results {
        if !seen.insert(r.query_id.as_str()) {
            return Err(Error::invalid(format!("duplicate result for query {}", r.query_id)));
        }
        let relevant = qrels
            .relevant(&r.query_id)
            .ok_or_else(|| Error::invalid(format!("query {} missing from qrels", r.query_id)))?;
        first_hit.insert(r.query_id.clone(), first_hit_rank(&r.ranking, relevant));
        shortest = shortest.min(r.ranking.len());
    }
    let n = results.len();
    let mut recall_at = BTreeMap::new();
    let mut truncated_k = Vec::new();
    for &k in ks {
        let hits = first_hit.values().filter(|r| r.is_some_and(|r| r <= k)).count();
        let value = if n == 0 { 0.0 } else { 100.0 * hits as f64 / n as f64 };
        recall_at.insert(k, value);
        if n > 0 && k > shortest && !truncated_k.contains(&k) {
            truncated_k.push(k);
        }
    }
    truncated_k.sort_unstable();
    Ok(MetricsReport {
        recall_at,
        n_queries: n,
        first_hit,
        truncated_k,
        latency_ms: None,
    })
}

/// Text table with one row per labelled report and one column per k.
pub fn format_table(rows: &[(&str, &MetricsReport)]) -> String {
    let ks: BTreeSet<usize> = rows.iter().flat_map(|(_, r)| r.recall_at.keys().copied()).collect();
    let label_width = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(0).max(6);
    let mut out = String::new();
    let _ = write!(out, "{:<label_width$}", "Method");
    for k in &ks {
        let _ = write!(out, " | {:>10}", format!("Recall@{k}"));
    }
    out.push('\n');
    let _ = write!(out, "{}", "-".repeat(label_width));
    for _ in &ks {
        let _ = write!(out, "-+-{}", "-".repeat(10));
    }
    out.push('\n');
    for (label, report) in rows {
        let _ = write!(out, "{label:<label_width$}");
        for k in &ks {
            match report.recall(*k) {
                Some(v) => {
                    let _ = write!(out, " | {v:>10.2}");
                }
                None => {
                    let _ = write!(out, " | {:>10}", "-");
                }
            }
        }
        out.push('\n');
    }
    out
}
