use std::collections::HashMap;
use std::hash::Hasher;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::caption::retry::{Attempt, RetryError, RetryPolicy};
use crate::caption::{digest_hex, ProviderError};
use crate::datamodel::{jsonl, read_embedding_file, EmbeddingVector, Matrix};
use crate::error::{Error, Result};

/// Bearer token for the HTTP embedder.
pub const EMBED_TOKEN_ENV: &str = "CGRS_EMBED_TOKEN";

pub trait SentenceEmbedder: Send + Sync {
    fn embedder_id(&self) -> &str;
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<EmbeddingVector<f64>>;

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector<f64>>> {
        texts.iter().map(|t| self.embed(t)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbedderKind {
    MockHash,
    File,
    Http,
}

impl EmbedderKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EmbedderKind::MockHash => "mock-hash",
            EmbedderKind::File => "file",
            EmbedderKind::Http => "http",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedderConfig {
    pub embedder_id: EmbedderKind,
    pub dim: usize,
    pub endpoint: Option<String>,
    /// Embedding file for the file embedder.
    pub embeddings: Option<PathBuf>,
    /// `{"digest", "row_index"}` JSONL for the file embedder.
    pub manifest: Option<PathBuf>,
    pub max_retries: u32,
    pub backoff_base_ms: u64,
    pub timeout_ms: u64,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self {
            embedder_id: EmbedderKind::MockHash,
            dim: 384,
            endpoint: None,
            embeddings: None,
            manifest: None,
            max_retries: 3,
            backoff_base_ms: 200,
            timeout_ms: 60_000,
        }
    }
}

pub fn build_embedder(cfg: &EmbedderConfig) -> Result<Box<dyn SentenceEmbedder>> {
    let missing = |what: &str| Error::from(ProviderError::Config(format!("{} embedder requires {what}", cfg.embedder_id.as_str())));
    Ok(match cfg.embedder_id {
        EmbedderKind::MockHash => Box::new(MockHashEmbedder::new(cfg.dim)?),
        EmbedderKind::File => Box::new(FileEmbedder::open(
            cfg.embeddings.as_ref().ok_or_else(|| missing("an embeddings path"))?,
            cfg.manifest.as_ref().ok_or_else(|| missing("a manifest path"))?,
        )?),
        EmbedderKind::Http => Box::new(HttpEmbedder::new(
            cfg.endpoint.clone().ok_or_else(|| missing("an endpoint"))?,
            cfg.dim,
            RetryPolicy {
                max_retries: cfg.max_retries,
                backoff_base_ms: cfg.backoff_base_ms,
            },
            cfg.timeout_ms,
        )),
    })
}

fn check_text(text: &str) -> Result<()> {
    if text.trim().is_empty() {
        return Err(Error::invalid("cannot embed empty text"));
    }
    Ok(())
}

/// Bag-of-tokens hashing embedder: lowercase, split on non-alphanumerics,
/// add one count per token at `fnv1a64(token) % dim`, L2-normalize.
#[derive(Debug, Clone)]
pub struct MockHashEmbedder {
    dim: usize,
}

impl MockHashEmbedder {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedder dim must be >= 1"));
        }
        Ok(Self { dim })
    }

    pub fn bucket(&self, token: &str) -> usize {
        let mut h = fnv::FnvHasher::default();
        h.write(token.as_bytes());
        (h.finish() % self.dim as u64) as usize
    }

    pub fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
        text.split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(str::to_lowercase)
    }

    /// Unnormalized token counts.
    pub fn counts(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for token in Self::tokens(text) {
            v[self.bucket(&token)] += 1.0;
        }
        v
    }
}

impl SentenceEmbedder for MockHashEmbedder {
    fn embedder_id(&self) -> &str {
        "mock-hash"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector<f64>> {
        check_text(text)?;
        let mut v = self.counts(text);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::invalid(format!("text {text:?} has no tokens")));
        }
        v.iter_mut().for_each(|x| *x /= norm);
        EmbeddingVector::new(v)
    }
}

/// One line of a file-embedder manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DigestRow {
    pub digest: String,
    pub row_index: usize,
}

/// Precomputed sentence embeddings addressed by the SHA-256 of the text.
#[derive(Debug, Clone)]
pub struct FileEmbedder {
    matrix: Matrix<f64>,
    rows: HashMap<String, usize>,
}

impl FileEmbedder {
    pub fn open(embeddings: impl Into<PathBuf>, manifest: impl Into<PathBuf>) -> Result<Self> {
        let matrix = read_embedding_file(embeddings.into())?.cast::<f64>();
        let manifest = manifest.into();
        let lines: Vec<DigestRow> = jsonl::read_jsonl(&manifest)?;
        let mut rows = HashMap::with_capacity(lines.len());
        for (i, line) in lines.into_iter().enumerate() {
            if line.row_index >= matrix.rows() {
                return Err(Error::Parse {
                    path: manifest.clone(),
                    line: i + 1,
                    message: format!("row_index {} out of range", line.row_index),
                });
            }
            rows.insert(line.digest, line.row_index);
        }
        Ok(Self { matrix, rows })
    }

    /// Writes the manifest half of a file embedder for `texts`, row i per text i.
    pub fn write_manifest(path: impl AsRef<std::path::Path>, texts: &[&str]) -> Result<()> {
        let lines: Vec<DigestRow> = texts
            .iter()
            .enumerate()
            .map(|(row_index, t)| DigestRow {
                digest: digest_hex(t),
                row_index,
            })
            .collect();
        jsonl::write_jsonl(path, &lines)
    }
}

impl SentenceEmbedder for FileEmbedder {
    fn embedder_id(&self) -> &str {
        "file"
    }

    fn dim(&self) -> usize {
        self.matrix.dim()
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector<f64>> {
        check_text(text)?;
        let digest = digest_hex(text);
        let row = self
            .rows
            .get(&digest)
            .ok_or_else(|| ProviderError::Unresolvable(format!("text digest {digest}")))?;
        self.matrix.embedding(*row)
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

/// Batch embedder over `POST {"texts": [...]}` returning `{"vectors": [...]}`.
pub struct HttpEmbedder {
    agent: ureq::Agent,
    endpoint: String,
    token: Option<String>,
    dim: usize,
    policy: RetryPolicy,
}

impl HttpEmbedder {
    pub fn new(endpoint: String, dim: usize, policy: RetryPolicy, timeout_ms: u64) -> Self {
        Self {
            agent: crate::caption::provider_support::http_agent(timeout_ms),
            endpoint,
            token: std::env::var(EMBED_TOKEN_ENV).ok().filter(|t| !t.is_empty()),
            dim,
            policy,
        }
    }

    fn attempt(&self, texts: &[&str]) -> Attempt<Vec<Vec<f64>>> {
        let mut req = self.agent.post(&self.endpoint);
        if let Some(token) = &self.token {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        match req.send_json(EmbedRequest { texts }) {
            Ok(mut resp) => {
                let status = resp.status().as_u16();
                if status == 200 {
                    match resp.body_mut().read_json::<EmbedResponse>() {
                        Ok(r) => Attempt::Done(r.vectors),
                        Err(e) => Attempt::Fatal(format!("malformed response: {e}")),
                    }
                } else if status >= 500 {
                    Attempt::Retryable(format!("status {status}"))
                } else {
                    Attempt::Fatal(format!("status {status}"))
                }
            }
            Err(e) if crate::caption::provider_support::classify_transport(&e) => Attempt::Retryable(e.to_string()),
            Err(e) => Attempt::Fatal(e.to_string()),
        }
    }
}

impl SentenceEmbedder for HttpEmbedder {
    fn embedder_id(&self) -> &str {
        "http"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector<f64>> {
        Ok(self.embed_batch(&[text])?.remove(0))
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector<f64>>> {
        for t in texts {
            check_text(t)?;
        }
        let vectors = self
            .policy
            .run(|| self.attempt(texts), |n, why| log::warn!("embedder retry {n}: {why}"))
            .map_err(|e| match e {
                RetryError::Exhausted { attempts, last } => ProviderError::Unavailable { attempts, last },
                RetryError::Fatal(msg) => ProviderError::Rejected(msg),
            })?;
        if vectors.len() != texts.len() {
            return Err(ProviderError::Rejected(format!(
                "{} vectors for {} texts",
                vectors.len(),
                texts.len()
            ))
            .into());
        }
        vectors
            .into_iter()
            .map(|v| {
                if v.len() != self.dim {
                    return Err(Error::DimensionMismatch {
                        expected: self.dim,
                        found: v.len(),
                    });
                }
                EmbeddingVector::new(v)
            })
            .collect()
    }
}
