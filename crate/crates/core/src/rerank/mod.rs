//! Stage two, part two: caption-guided reranking.
//!
//! The query and each candidate caption are embedded by a sentence
//! embedder; their cosine is fused with the coarse visual score as
//! `alpha * s_coarse + (1 - alpha) * s_sem`, and the candidates are
//! reordered by the fused score.

mod embedder;
mod fuse;

pub use embedder::{
    build_embedder, DigestRow, EmbedderConfig, EmbedderKind, FileEmbedder, HttpEmbedder, MockHashEmbedder, SentenceEmbedder,
    EMBED_TOKEN_ENV,
};
pub use fuse::{
    embed_text, fuse_ranked, fuse_scores, rerank, semantic_similarity, FusedCandidate, FusedResult,
    MissingCaptionPolicy, ScoreBreakdown,
};
