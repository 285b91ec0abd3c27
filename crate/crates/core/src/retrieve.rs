//! Stage one: exact cosine scan with top-K selection.
//!
//! Each shard keeps its own top-K by partial selection; the shard winners
//! are merged with the same total order (score descending, then image_id
//! ascending), so the output does not depend on the shard count.

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::datamodel::{EmbeddingVector, Matrix, QueryRecord, RankedList, ResultRecord};
use crate::error::{Error, Result};
use crate::scalar::{self, Scalar};
use crate::store::{GalleryStore, ShardView};

const CLAMP_SLACK: f64 = 1e-6;

/// Top candidates for one query; scores are raw cosines.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseResult {
    pub query_id: String,
    pub candidates: RankedList,
}

impl CoarseResult {
    pub fn to_record(&self) -> ResultRecord {
        ResultRecord::new(&self.query_id, &self.candidates)
    }

    pub fn from_record(record: &ResultRecord) -> Result<Self> {
        Ok(Self {
            query_id: record.query_id.clone(),
            candidates: record.to_ranked()?,
        })
    }
}

fn clamp_unit<S: Scalar>(x: S) -> S {
    let one = S::one();
    let slack = S::of(CLAMP_SLACK);
    if x > one && x - one <= slack {
        one
    } else if x < -one && -one - x <= slack {
        -one
    } else {
        x
    }
}

/// Cosine from a dot product and the two norms.
pub(crate) fn cosine_from_parts<S: Scalar>(dot: S, norm_a: S, norm_b: S) -> S {
    clamp_unit(dot / (norm_a * norm_b))
}

pub fn cosine_similarity<S: Scalar>(a: &EmbeddingVector<S>, b: &EmbeddingVector<S>) -> Result<S> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    Ok(cosine_from_parts(scalar::dot(a.values(), b.values()), a.norm(), b.norm()))
}

#[derive(Debug, Clone, Copy)]
struct Hit<S> {
    score: S,
    row: usize,
}

fn rank_order<S: Scalar>(store: &GalleryStore<S>, a: &Hit<S>, b: &Hit<S>) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| store.id_at_row(a.row).cmp(store.id_at_row(b.row)))
}

fn select_top<S: Scalar>(store: &GalleryStore<S>, mut hits: Vec<Hit<S>>, k: usize) -> Vec<Hit<S>> {
    if hits.len() > k {
        hits.select_nth_unstable_by(k - 1, |a, b| rank_order(store, a, b));
        hits.truncate(k);
    }
    hits.sort_unstable_by(|a, b| rank_order(store, a, b));
    hits
}

fn scan_shard<S: Scalar>(shard: &ShardView<'_, S>, query: &[S], query_norm: S, k: usize) -> Vec<Hit<S>> {
    let store = shard.store;
    let hits = shard
        .rows()
        .map(|row| Hit {
            score: cosine_from_parts(scalar::dot(query, store.row(row)), query_norm, store.norms()[row]),
            row,
        })
        .collect();
    select_top(store, hits, k)
}

fn check_query<S: Scalar>(store: &GalleryStore<S>, dim: usize, k: usize) -> Result<()> {
    if store.is_empty() {
        return Err(Error::invalid("empty gallery"));
    }
    if k == 0 {
        return Err(Error::invalid("k must be >= 1"));
    }
    if dim != store.dim() {
        return Err(Error::DimensionMismatch {
            expected: store.dim(),
            found: dim,
        });
    }
    Ok(())
}

fn topk_rows<S: Scalar>(store: &GalleryStore<S>, query: &[S], k: usize, n_shards: usize) -> Result<RankedList> {
    check_query(store, query.len(), k)?;
    let query_norm = scalar::norm(query);
    if query_norm.is_nan() || query_norm <= S::zero() {
        return Err(Error::invalid("zero-norm query"));
    }
    let shards = store.shard(n_shards)?;
    let merged: Vec<Hit<S>> = shards
        .par_iter()
        .map(|shard| scan_shard(shard, query, query_norm, k))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    let top = select_top(store, merged, k);
    RankedList::from_ordered(
        top.into_iter()
            .map(|h| (store.id_at_row(h.row).to_owned(), h.score.as_f64())),
    )
}

/// The `k` rows with highest cosine to `query`, best first; all rows when
/// `k` exceeds the gallery size.
pub fn retrieve_topk<S: Scalar>(store: &GalleryStore<S>, query: &EmbeddingVector<S>, k: usize) -> Result<RankedList> {
    topk_rows(store, query.values(), k, 1)
}

pub fn retrieve_topk_sharded<S: Scalar>(
    store: &GalleryStore<S>,
    query: &EmbeddingVector<S>,
    k: usize,
    n_shards: usize,
) -> Result<RankedList> {
    topk_rows(store, query.values(), k, n_shards)
}

/// One ranking per query row, in query order.
pub fn retrieve_batch<S: Scalar>(
    store: &GalleryStore<S>,
    queries: &Matrix<S>,
    k: usize,
    n_shards: usize,
) -> Result<Vec<RankedList>> {
    check_query(store, queries.dim(), k)?;
    (0..queries.rows())
        .into_par_iter()
        .map(|i| topk_rows(store, queries.row(i), k, n_shards))
        .collect()
}

/// Runs [`retrieve_batch`] over a query manifest, addressing the query
/// matrix through each record's `row_index`.
pub fn retrieve_queries<S: Scalar>(
    store: &GalleryStore<S>,
    queries: &[QueryRecord],
    query_matrix: &Matrix<S>,
    k: usize,
    n_shards: usize,
) -> Result<Vec<CoarseResult>> {
    check_query(store, query_matrix.dim(), k)?;
    queries
        .par_iter()
        .map(|q| {
            if q.row_index >= query_matrix.rows() {
                return Err(Error::invalid(format!(
                    "query {} row_index {} out of range",
                    q.query_id, q.row_index
                )));
            }
            Ok(CoarseResult {
                query_id: q.query_id.clone(),
                candidates: topk_rows(store, query_matrix.row(q.row_index), k, n_shards)?,
            })
        })
        .collect()
}
