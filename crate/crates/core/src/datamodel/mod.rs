//! Domain types shared by every stage, plus the on-disk formats.
//!
//! Embeddings live in a raw little-endian binary file ([`embfile`]); every
//! record type is one JSON object per line ([`jsonl`]). `image_id` is the
//! join key across coarse results, captions, and evaluation; `row_index`
//! only addresses the embedding matrix.

mod bbox;
pub mod embfile;
pub mod jsonl;
mod validate;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{self, Scalar};

pub use bbox::{BoundingBox, Extent};
pub use embfile::{decode_embeddings, encode_embeddings, read_embedding_file, write_embedding_file};
pub use validate::{validate_gallery, validate_queries, ValidationReport, Violation};

/// Finite, nonzero vector of fixed dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector<S> {
    values: Vec<S>,
}

impl<S: Scalar> EmbeddingVector<S> {
    pub fn new(values: Vec<S>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("embedding must have dim >= 1"));
        }
        if let Some(col) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite embedding entry at column {col}")));
        }
        if scalar::norm(&values) <= S::zero() {
            return Err(Error::invalid("zero-norm embedding"));
        }
        Ok(Self { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn norm(&self) -> S {
        scalar::norm(&self.values)
    }

    pub fn scaled(&self, factor: S) -> Result<Self> {
        Self::new(self.values.iter().map(|&v| v * factor).collect())
    }

    pub fn into_values(self) -> Vec<S> {
        self.values
    }
}

/// Dense row-major matrix; one embedding per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<S> {
    dim: usize,
    data: Vec<S>,
}

impl<S: Scalar> Matrix<S> {
    /// Builds a matrix from a flat row-major buffer.
    pub fn from_flat(dim: usize, data: Vec<S>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("matrix dim must be >= 1"));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::invalid(format!(
                "buffer of {} values is not a multiple of dim {dim}",
                data.len()
            )));
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows(rows: &[Vec<S>]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::invalid("matrix has no rows"));
        };
        let dim = first.len();
        if dim == 0 {
            return Err(Error::invalid("matrix dim must be >= 1"));
        }
        let mut data = Vec::with_capacity(dim * rows.len());
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::invalid(format!(
                    "non-rectangular matrix: row {i} has {} values, expected {dim}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(Self { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[S]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[S] {
        &self.data
    }

    pub fn embedding(&self, i: usize) -> Result<EmbeddingVector<S>> {
        EmbeddingVector::new(self.row(i).to_vec())
    }

    /// Checks every row against the embedding invariants (finite, nonzero).
    pub fn check_rows(&self) -> Result<()> {
        for (i, row) in self.iter_rows().enumerate() {
            if let Some(col) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("non-finite value at row {i}, column {col}")));
            }
            if scalar::norm(row) <= S::zero() {
                return Err(Error::invalid(format!("zero-norm row {i}")));
            }
        }
        Ok(())
    }

    pub fn cast<T: Scalar>(&self) -> Matrix<T> {
        Matrix {
            dim: self.dim,
            data: self
                .data
                .iter()
                .map(|v| T::from(*v).expect("float to float cast"))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Platform {
    Drone,
    Satellite,
    Ground,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: String,
    pub platform: Platform,
    pub uri: Option<String>,
    pub row_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub query_id: String,
    pub text: String,
    pub relevant_ids: Vec<String>,
    pub row_index: usize,
}

/// Generated description of one gallery image and where it came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Caption {
    pub image_id: String,
    pub text: String,
    pub provider_id: String,
    pub prompt_hash: String,
    pub model_id: String,
    pub token_limit: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    pub image_id: String,
    pub score: f64,
    pub rank: usize,
}

/// Candidates ordered by non-increasing score with ranks `1..=n`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RankedList(Vec<RankedCandidate>);

impl RankedList {
    /// Assigns ranks to `(image_id, score)` pairs already in final order.
    pub fn from_ordered<I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, f64)>,
    {
        let list = RankedList(
            pairs
                .into_iter()
                .enumerate()
                .map(|(i, (image_id, score))| RankedCandidate {
                    image_id,
                    score,
                    rank: i + 1,
                })
                .collect(),
        );
        list.check()?;
        Ok(list)
    }

    pub fn check(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::with_capacity(self.0.len());
        for (i, c) in self.0.iter().enumerate() {
            if !c.score.is_finite() {
                return Err(Error::invalid(format!("non-finite score for {}", c.image_id)));
            }
            if c.rank != i + 1 {
                return Err(Error::invalid(format!("rank gap at position {}", i + 1)));
            }
            if !seen.insert(c.image_id.as_str()) {
                return Err(Error::invalid(format!("duplicate candidate {}", c.image_id)));
            }
            if i > 0 && self.0[i - 1].score < c.score {
                return Err(Error::invalid(format!(
                    "scores increase at rank {} ({} < {})",
                    c.rank,
                    self.0[i - 1].score,
                    c.score
                )));
            }
        }
        Ok(())
    }

    pub fn as_slice(&self) -> &[RankedCandidate] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, RankedCandidate> {
        self.0.iter()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> + '_ {
        self.0.iter().map(|c| c.image_id.as_str())
    }
}

impl<'a> IntoIterator for &'a RankedList {
    type Item = &'a RankedCandidate;
    type IntoIter = std::slice::Iter<'a, RankedCandidate>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    pub alpha: f64,
    pub k_coarse: usize,
    pub k_report: Vec<usize>,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            alpha: 0.3,
            k_coarse: 20,
            k_report: vec![1, 5, 10],
        }
    }
}

impl FusionConfig {
    pub fn check(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if self.k_coarse == 0 || self.k_report.contains(&0) {
            return Err(Error::invalid("k values must be positive"));
        }
        if let Some(&max) = self.k_report.iter().max() {
            if max > self.k_coarse {
                return Err(Error::invalid(format!(
                    "k_coarse {} below reported k {max}",
                    self.k_coarse
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredId {
    pub image_id: String,
    pub score: f64,
}

/// One line of a result file: a query and its ranking, best first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub query_id: String,
    pub ranking: Vec<ScoredId>,
}

impl ResultRecord {
    pub fn new(query_id: impl Into<String>, list: &RankedList) -> Self {
        Self {
            query_id: query_id.into(),
            ranking: list
                .iter()
                .map(|c| ScoredId {
                    image_id: c.image_id.clone(),
                    score: c.score,
                })
                .collect(),
        }
    }

    pub fn to_ranked(&self) -> Result<RankedList> {
        RankedList::from_ordered(self.ranking.iter().map(|s| (s.image_id.clone(), s.score)))
    }
}
