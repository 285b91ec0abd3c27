use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::SentenceEmbedder;
use crate::datamodel::{Caption, EmbeddingVector, ResultRecord, ScoredId};
use crate::error::{Error, Result};
use crate::retrieve::{cosine_similarity, CoarseResult};

pub fn embed_text(embedder: &dyn SentenceEmbedder, text: &str) -> Result<EmbeddingVector<f64>> {
    let v = embedder.embed(text)?;
    if v.dim() != embedder.dim() {
        return Err(Error::DimensionMismatch {
            expected: embedder.dim(),
            found: v.dim(),
        });
    }
    Ok(v)
}

pub fn semantic_similarity(embedder: &dyn SentenceEmbedder, query_text: &str, caption: &Caption) -> Result<f64> {
    let q = embed_text(embedder, query_text)?;
    let c = embed_text(embedder, &caption.text)?;
    cosine_similarity(&q, &c)
}

/// `alpha * s_coarse + (1 - alpha) * s_sem`.
pub fn fuse_scores(s_coarse: f64, s_sem: f64, alpha: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!("alpha {alpha} outside [0, 1]")));
    }
    Ok(alpha * s_coarse + (1.0 - alpha) * s_sem)
}

/// What to do when a coarse candidate has no caption.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MissingCaptionPolicy {
    #[default]
    Error,
    /// Score the candidate with `s_sem = -1` and log a warning.
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FusedCandidate {
    pub image_id: String,
    pub rank: usize,
    pub s_coarse: f64,
    pub s_sem: f64,
    pub s_final: f64,
    pub caption_missing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FusedResult {
    pub query_id: String,
    pub candidates: Vec<FusedCandidate>,
    pub policy: MissingCaptionPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreBreakdown {
    pub query_id: String,
    pub image_id: String,
    pub s_coarse: f64,
    pub s_sem: f64,
    pub s_final: f64,
}

impl FusedResult {
    pub fn to_record(&self) -> ResultRecord {
        ResultRecord {
            query_id: self.query_id.clone(),
            ranking: self
                .candidates
                .iter()
                .map(|c| ScoredId {
                    image_id: c.image_id.clone(),
                    score: c.s_final,
                })
                .collect(),
        }
    }

    pub fn breakdown(&self) -> impl Iterator<Item = ScoreBreakdown> + '_ {
        self.candidates.iter().map(|c| ScoreBreakdown {
            query_id: self.query_id.clone(),
            image_id: c.image_id.clone(),
            s_coarse: c.s_coarse,
            s_sem: c.s_sem,
            s_final: c.s_final,
        })
    }

    pub fn fallbacks(&self) -> usize {
        self.candidates.iter().filter(|c| c.caption_missing).count()
    }
}

/// Fuses precomputed semantic scores (aligned with the coarse candidates)
/// and sorts by fused score, ties by ascending image_id.
pub fn fuse_ranked(
    coarse: &CoarseResult,
    s_sem: &[f64],
    missing: &[bool],
    alpha: f64,
    policy: MissingCaptionPolicy,
) -> Result<FusedResult> {
    if s_sem.len() != coarse.candidates.len() || missing.len() != s_sem.len() {
        return Err(Error::invalid("semantic scores not aligned with candidates"));
    }
    let mut candidates = coarse
        .candidates
        .iter()
        .zip(s_sem.iter().zip(missing))
        .map(|(c, (&sem, &miss))| {
            Ok(FusedCandidate {
                image_id: c.image_id.clone(),
                rank: 0,
                s_coarse: c.score,
                s_sem: sem,
                s_final: fuse_scores(c.score, sem, alpha)?,
                caption_missing: miss,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    candidates.sort_by(|a, b| {
        b.s_final
            .partial_cmp(&a.s_final)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.image_id.cmp(&b.image_id))
    });
    for (i, c) in candidates.iter_mut().enumerate() {
        c.rank = i + 1;
    }
    Ok(FusedResult {
        query_id: coarse.query_id.clone(),
        candidates,
        policy,
    })
}

/// Reorders one query's coarse candidates by fused score. The query is
/// embedded once; captions are embedded in one batch.
pub fn rerank(
    coarse: &CoarseResult,
    query_text: &str,
    captions: &HashMap<String, Caption>,
    embedder: &dyn SentenceEmbedder,
    alpha: f64,
    policy: MissingCaptionPolicy,
) -> Result<FusedResult> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!("alpha {alpha} outside [0, 1]")));
    }
    let query = embed_text(embedder, query_text)?;
    let mut texts = Vec::with_capacity(coarse.candidates.len());
    let mut missing = Vec::with_capacity(coarse.candidates.len());
    for c in &coarse.candidates {
        match captions.get(&c.image_id) {
            Some(caption) => {
                texts.push(caption.text.as_str());
                missing.push(false);
            }
            None if policy == MissingCaptionPolicy::Fallback => {
                log::warn!("query {}: no caption for {}, using s_sem = -1", coarse.query_id, c.image_id);
                missing.push(true);
            }
            None => return Err(Error::MissingCaption(c.image_id.clone())),
        }
    }
    let embedded = embedder.embed_batch(&texts)?;
    let mut embedded = embedded.iter();
    let s_sem = missing
        .iter()
        .map(|&miss| {
            if miss {
                Ok(-1.0)
            } else {
                cosine_similarity(&query, embedded.next().expect("one embedding per caption"))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    fuse_ranked(coarse, &s_sem, &missing, alpha, policy)
}
