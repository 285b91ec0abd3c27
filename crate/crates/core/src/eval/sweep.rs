use std::collections::HashMap;

use serde::Serialize;

use super::{recall_at_k, MetricsReport, Qrels};
use crate::datamodel::{Caption, Matrix, QueryRecord};
use crate::error::{Error, Result};
use crate::rerank::{embed_text, fuse_ranked, MissingCaptionPolicy, SentenceEmbedder};
use crate::retrieve::{cosine_similarity, retrieve_queries, CoarseResult};
use crate::scalar::Scalar;
use crate::store::GalleryStore;

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub report: MetricsReport,
}

/// Evaluates every alpha over precomputed coarse results. Semantic scores
/// are computed once per (query, candidate) and reused across alphas.
pub fn alpha_sweep_coarse(
    coarse: &[CoarseResult],
    query_texts: &HashMap<String, String>,
    captions: &HashMap<String, Caption>,
    embedder: &dyn SentenceEmbedder,
    qrels: &Qrels,
    alphas: &[f64],
    ks: &[usize],
) -> Result<Vec<SweepRow>> {
    let mut caption_vectors = HashMap::new();
    let mut semantic = Vec::with_capacity(coarse.len());
    for c in coarse {
        let text = query_texts
            .get(&c.query_id)
            .ok_or_else(|| Error::invalid(format!("no text for query {}", c.query_id)))?;
        let q = embed_text(embedder, text)?;
        let mut scores = Vec::with_capacity(c.candidates.len());
        for cand in &c.candidates {
            let caption = captions
                .get(&cand.image_id)
                .ok_or_else(|| Error::MissingCaption(cand.image_id.clone()))?;
            if !caption_vectors.contains_key(&cand.image_id) {
                caption_vectors.insert(cand.image_id.clone(), embed_text(embedder, &caption.text)?);
            }
            scores.push(cosine_similarity(&q, &caption_vectors[&cand.image_id])?);
        }
        semantic.push(scores);
    }
    alphas
        .iter()
        .map(|&alpha| {
            let results = coarse
                .iter()
                .zip(&semantic)
                .map(|(c, s)| {
                    let missing = vec![false; s.len()];
                    Ok(fuse_ranked(c, s, &missing, alpha, MissingCaptionPolicy::Error)?.to_record())
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(SweepRow {
                alpha,
                report: recall_at_k(&results, qrels, ks)?,
            })
        })
        .collect()
}

/// Runs coarse retrieval once, then [`alpha_sweep_coarse`].
#[allow(clippy::too_many_arguments)]
pub fn alpha_sweep<S: Scalar>(
    store: &GalleryStore<S>,
    queries: &[QueryRecord],
    query_matrix: &Matrix<S>,
    captions: &HashMap<String, Caption>,
    embedder: &dyn SentenceEmbedder,
    qrels: &Qrels,
    alphas: &[f64],
    k_coarse: usize,
    ks: &[usize],
) -> Result<Vec<SweepRow>> {
    let coarse = retrieve_queries(store, queries, query_matrix, k_coarse, 1)?;
    let texts = queries.iter().map(|q| (q.query_id.clone(), q.text.clone())).collect();
    alpha_sweep_coarse(&coarse, &texts, captions, embedder, qrels, alphas, ks)
}
