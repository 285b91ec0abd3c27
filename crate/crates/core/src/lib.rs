//! Caption-guided two-stage cross-modal retrieval.
//!
//! Stage one scans a precomputed gallery of image embeddings with exact
//! cosine similarity and keeps the top candidates per text query. Stage two
//! captions those candidates with a vision-language provider, embeds query
//! and captions with a sentence encoder, and reorders the candidates by a
//! weighted fusion of the visual and textual similarities.
//!
//! The numeric core ([`store`], [`retrieve`], [`losskit`]) is generic over
//! the scalar type through [`Scalar`]; the aliases below pick the concrete
//! types used by the on-disk formats (`f32`) and by the numerical checks
//! (`f64`).

pub mod caption;
pub mod datamodel;
pub mod error;
pub mod eval;
pub mod losskit;
pub mod rerank;
pub mod retrieve;
pub mod scalar;
pub mod store;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Gallery store over the `f32` values read from embedding files.
pub type Gallery = store::GalleryStore<f32>;
/// Gallery store promoted to `f64`.
pub type Gallery64 = store::GalleryStore<f64>;
/// Embedding vector as stored on disk.
pub type Embedding = datamodel::EmbeddingVector<f32>;
/// Embedding vector in double precision (sentence embedders, checks).
pub type Embedding64 = datamodel::EmbeddingVector<f64>;
/// Row-major embedding matrix as stored on disk.
pub type EmbeddingMatrix = datamodel::Matrix<f32>;
/// Contrastive batch in double precision, the precision gradient checks run in.
pub type Batch64 = losskit::BatchEmbeddings<f64>;
/// Bounding box in double precision.
pub type Box64 = losskit::BoundingBox<f64>;
