use std::collections::HashMap;
use std::time::Instant;

use serde::Serialize;

use crate::datamodel::{Caption, RankedList};
use crate::error::{Error, Result};
use crate::rerank::{rerank, MissingCaptionPolicy, MockHashEmbedder};
use crate::retrieve::CoarseResult;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencyStats {
    pub n_trials: usize,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p99_ms: f64,
    pub max_ms: f64,
}

impl LatencyStats {
    /// Nearest-rank percentiles over per-trial samples in milliseconds.
    pub fn from_samples(samples: &mut [f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("no latency samples"));
        }
        samples.sort_by(|a, b| a.total_cmp(b));
        let n = samples.len();
        let pct = |p: f64| samples[((p * n as f64).ceil() as usize).clamp(1, n) - 1];
        Ok(Self {
            n_trials: n,
            mean_ms: samples.iter().sum::<f64>() / n as f64,
            p50_ms: pct(0.50),
            p99_ms: pct(0.99),
            max_ms: samples[n - 1],
        })
    }
}

const WORDS: &[&str] = &[
    "the", "main", "building", "is", "a", "large", "rectangular", "structure", "with", "flat", "grey", "roof",
    "located", "center", "of", "image", "surrounded", "by", "parking", "lot", "on", "left", "and", "sports",
    "field", "right", "road", "runs", "along", "bottom", "edge", "trees", "line", "top", "several", "smaller",
    "buildings", "cluster", "near", "entrance", "green", "lawn", "courtyard", "walkway", "connects",
];

fn synthetic_text(seed: usize, words: usize) -> String {
    (0..words)
        .map(|i| WORDS[(seed * 31 + i * 7 + i * i) % WORDS.len()])
        .collect::<Vec<_>>()
        .join(" ")
}

/// Wall-clock cost of reranking one query: embed the query and
/// `n_candidates` captions of about 130 words with the local hashing
/// embedder, fuse and sort.
pub fn measure_rerank_latency(n_candidates: usize, n_trials: usize, embed_dim: usize) -> Result<LatencyStats> {
    if n_candidates == 0 || n_trials == 0 {
        return Err(Error::invalid("need at least one candidate and one trial"));
    }
    let embedder = MockHashEmbedder::new(embed_dim)?;
    let coarse = CoarseResult {
        query_id: "latency".into(),
        candidates: RankedList::from_ordered((0..n_candidates).map(|i| (format!("img_{i:03}"), 0.9 - i as f64 * 0.01)))?,
    };
    let captions: HashMap<String, Caption> = (0..n_candidates)
        .map(|i| {
            let id = format!("img_{i:03}");
            let caption = Caption {
                image_id: id.clone(),
                text: synthetic_text(i, 130),
                provider_id: "mock".into(),
                prompt_hash: String::new(),
                model_id: "mock".into(),
                token_limit: 256,
            };
            (id, caption)
        })
        .collect();
    let query = synthetic_text(999, 40);
    let mut samples = Vec::with_capacity(n_trials);
    for _ in 0..n_trials {
        let start = Instant::now();
        let fused = rerank(&coarse, &query, &captions, &embedder, 0.3, MissingCaptionPolicy::Error)?;
        std::hint::black_box(&fused);
        samples.push(start.elapsed().as_secs_f64() * 1e3);
    }
    LatencyStats::from_samples(&mut samples)
}
