//! Stage two, part one: captions for the coarse candidates.
//!
//! Providers turn an image record plus prompt into caption text. Captions
//! are cached on disk keyed by `(image_id, prompt_hash, model_id)`, so a
//! rerun over the same candidates only pays for images not seen before.

mod batch;
mod cache;
mod prompt;
mod provider;
pub mod retry;

use thiserror::Error;

pub use batch::{caption_candidates, CaptionFailure, CaptionRun};
pub use cache::{CacheKey, CaptionCache};
pub use prompt::{digest_hex, render_prompt, PromptTemplate, DEFAULT_PROMPT};
pub use provider::{
    build_provider, fetch_caption, CaptionProvider, FileProvider, HttpProvider, MappingLine, MockProvider, ProviderConfig,
    ProviderKind, CAPTION_TOKEN_ENV,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProviderError {
    #[error("provider unavailable after {attempts} attempt(s): {last}")]
    Unavailable { attempts: u32, last: String },

    #[error("provider rejected request: {0}")]
    Rejected(String),

    #[error("image {0} cannot be resolved by the provider")]
    Unresolvable(String),

    #[error("empty caption returned for {0}")]
    EmptyCaption(String),

    #[error("provider config: {0}")]
    Config(String),
}

pub(crate) mod provider_support {
    pub(crate) use super::provider::{classify_transport, http_agent};
}
