use std::collections::HashMap;
use std::hash::Hasher;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::retry::{Attempt, RetryError, RetryPolicy};
use super::{ProviderError, PromptTemplate};
use crate::datamodel::{jsonl, Caption, ImageRecord};
use crate::error::{Error, Result};

/// Bearer token for the HTTP caption provider.
pub const CAPTION_TOKEN_ENV: &str = "CGRS_CAPTION_TOKEN";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Mock,
    File,
    Http,
}

impl ProviderKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ProviderKind::Mock => "mock",
            ProviderKind::File => "file",
            ProviderKind::Http => "http",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub provider_id: ProviderKind,
    pub endpoint: Option<String>,
    /// Caption mapping for the file provider.
    pub source: Option<PathBuf>,
    pub model_id: String,
    pub token_limit: u32,
    pub max_concurrency: usize,
    pub max_retries: u32,
    pub backoff_base_ms: u64,
    pub timeout_ms: u64,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            provider_id: ProviderKind::Mock,
            endpoint: None,
            source: None,
            model_id: "mock-vlm".into(),
            token_limit: 256,
            max_concurrency: 8,
            max_retries: 3,
            backoff_base_ms: 200,
            timeout_ms: 60_000,
        }
    }
}

impl ProviderConfig {
    pub fn check(&self) -> Result<(), ProviderError> {
        if self.token_limit == 0 {
            return Err(ProviderError::Config("token_limit must be >= 1".into()));
        }
        if self.max_concurrency == 0 {
            return Err(ProviderError::Config("max_concurrency must be >= 1".into()));
        }
        if self.backoff_base_ms == 0 {
            return Err(ProviderError::Config("backoff_base_ms must be >= 1".into()));
        }
        match self.provider_id {
            ProviderKind::Http if self.endpoint.is_none() => {
                Err(ProviderError::Config("http provider requires an endpoint".into()))
            }
            ProviderKind::File if self.source.is_none() => {
                Err(ProviderError::Config("file provider requires a source mapping".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            max_retries: self.max_retries,
            backoff_base_ms: self.backoff_base_ms,
        }
    }
}

pub trait CaptionProvider: Send + Sync {
    fn provider_id(&self) -> &str;
    fn model_id(&self) -> &str;
    fn token_limit(&self) -> u32;
    /// Raw caption text for `image` under `prompt`.
    fn describe(&self, image: &ImageRecord, prompt: &str) -> Result<String, ProviderError>;
}

/// Asks `provider` for a caption and stamps it with provider, model and
/// prompt hash. Blank captions are provider errors.
pub fn fetch_caption(
    provider: &dyn CaptionProvider,
    image: &ImageRecord,
    template: &PromptTemplate,
) -> Result<Caption, ProviderError> {
    let text = provider.describe(image, template.text())?;
    if text.trim().is_empty() {
        return Err(ProviderError::EmptyCaption(image.image_id.clone()));
    }
    Ok(Caption {
        image_id: image.image_id.clone(),
        text,
        provider_id: provider.provider_id().to_owned(),
        prompt_hash: template.hash().to_owned(),
        model_id: provider.model_id().to_owned(),
        token_limit: provider.token_limit(),
    })
}

pub fn build_provider(cfg: &ProviderConfig) -> Result<Box<dyn CaptionProvider>> {
    cfg.check()?;
    Ok(match cfg.provider_id {
        ProviderKind::Mock => Box::new(MockProvider::new(&cfg.model_id, cfg.token_limit)),
        ProviderKind::File => Box::new(FileProvider::open(
            cfg.source.as_ref().expect("checked above"),
            &cfg.model_id,
            cfg.token_limit,
        )?),
        ProviderKind::Http => Box::new(HttpProvider::new(cfg)?),
    })
}

const STRUCTURES: &[&str] = &[
    "office tower", "stadium", "library", "warehouse", "dormitory", "church", "hospital", "school",
    "apartment block", "museum", "gymnasium", "factory",
];
const FEATURES: &[&str] = &[
    "flat grey roof", "red tiled roof", "glass facade", "domed roof", "rooftop solar panels",
    "white rectangular roof", "curved roofline", "central courtyard",
];
const LANDMARKS: &[&str] = &[
    "parking lot", "sports field", "tennis courts", "tree-lined road", "small lake", "running track",
    "plaza", "railway line", "green lawn", "highway interchange",
];
const DIRECTIONS: &[&str] = &["left", "right", "top", "bottom"];

fn fnv64(text: &str) -> u64 {
    let mut h = fnv::FnvHasher::default();
    h.write(text.as_bytes());
    h.finish()
}

/// Offline provider whose caption depends on `image_id` alone.
#[derive(Debug, Clone)]
pub struct MockProvider {
    model_id: String,
    token_limit: u32,
}

impl MockProvider {
    pub fn new(model_id: &str, token_limit: u32) -> Self {
        Self {
            model_id: model_id.to_owned(),
            token_limit,
        }
    }

    pub fn caption_for(image_id: &str) -> String {
        let mut seed = fnv64(image_id);
        let mut pick = |words: &[&'static str]| {
            let w = words[(seed % words.len() as u64) as usize];
            seed = seed.rotate_left(17) ^ 0x9e37_79b9_7f4a_7c15;
            w
        };
        let structure = pick(STRUCTURES);
        let feature = pick(FEATURES);
        let left = pick(LANDMARKS);
        let dir = pick(DIRECTIONS);
        let right = pick(LANDMARKS);
        format!(
            "Aerial view of {image_id}: a {structure} with a {feature} sits in the center. \
             A {left} lies to the {dir} of it, and a {right} runs along the far edge."
        )
    }
}

impl CaptionProvider for MockProvider {
    fn provider_id(&self) -> &str {
        "mock"
    }

    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn token_limit(&self) -> u32 {
        self.token_limit
    }

    fn describe(&self, image: &ImageRecord, _prompt: &str) -> Result<String, ProviderError> {
        Ok(Self::caption_for(&image.image_id))
    }
}

/// One line of a file-provider caption mapping.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingLine {
    pub image_id: String,
    pub text: String,
}

/// Precomputed captions read from a `{"image_id", "text"}` JSONL mapping.
#[derive(Debug, Clone)]
pub struct FileProvider {
    captions: HashMap<String, String>,
    model_id: String,
    token_limit: u32,
}

impl FileProvider {
    pub fn open(path: impl Into<PathBuf>, model_id: &str, token_limit: u32) -> Result<Self> {
        let lines: Vec<MappingLine> = jsonl::read_jsonl(path.into())?;
        Ok(Self::from_pairs(
            lines.into_iter().map(|l| (l.image_id, l.text)),
            model_id,
            token_limit,
        ))
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (String, String)>, model_id: &str, token_limit: u32) -> Self {
        Self {
            captions: pairs.into_iter().collect(),
            model_id: model_id.to_owned(),
            token_limit,
        }
    }

    /// Writes a mapping file the file provider can read back.
    pub fn write_mapping(path: impl AsRef<std::path::Path>, pairs: &[(String, String)]) -> Result<()> {
        let lines: Vec<MappingLine> = pairs
            .iter()
            .map(|(image_id, text)| MappingLine {
                image_id: image_id.clone(),
                text: text.clone(),
            })
            .collect();
        jsonl::write_jsonl(path, &lines)
    }
}

impl CaptionProvider for FileProvider {
    fn provider_id(&self) -> &str {
        "file"
    }

    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn token_limit(&self) -> u32 {
        self.token_limit
    }

    fn describe(&self, image: &ImageRecord, _prompt: &str) -> Result<String, ProviderError> {
        self.captions
            .get(&image.image_id)
            .cloned()
            .ok_or_else(|| ProviderError::Unresolvable(image.image_id.clone()))
    }
}

#[derive(Serialize)]
struct CaptionRequest<'a> {
    image_id: &'a str,
    image_uri: Option<&'a str>,
    prompt: &'a str,
    model_id: &'a str,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct CaptionResponse {
    caption: String,
}

/// Build an HTTP/1.1 agent that hands non-2xx statuses back to the caller.
pub(crate) fn http_agent(timeout_ms: u64) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_millis(timeout_ms)))
        .http_status_as_error(false)
        .build()
        .into()
}

pub(crate) fn classify_transport(err: &ureq::Error) -> bool {
    matches!(
        err,
        ureq::Error::Timeout(_) | ureq::Error::Io(_) | ureq::Error::ConnectionFailed | ureq::Error::HostNotFound
    )
}

/// POSTs one JSON request per image; retries 5xx and transport failures.
pub struct HttpProvider {
    agent: ureq::Agent,
    endpoint: String,
    token: Option<String>,
    model_id: String,
    token_limit: u32,
    policy: RetryPolicy,
    retries: AtomicU64,
}

impl HttpProvider {
    pub fn new(cfg: &ProviderConfig) -> Result<Self> {
        let endpoint = cfg
            .endpoint
            .clone()
            .ok_or_else(|| Error::from(ProviderError::Config("http provider requires an endpoint".into())))?;
        Ok(Self {
            agent: http_agent(cfg.timeout_ms),
            endpoint,
            token: std::env::var(CAPTION_TOKEN_ENV).ok().filter(|t| !t.is_empty()),
            model_id: cfg.model_id.clone(),
            token_limit: cfg.token_limit,
            policy: cfg.retry_policy(),
            retries: AtomicU64::new(0),
        })
    }

    /// Total retries performed by this provider so far.
    pub fn retries(&self) -> u64 {
        self.retries.load(Ordering::Relaxed)
    }

    fn attempt(&self, body: &CaptionRequest<'_>) -> Attempt<String> {
        let mut req = self.agent.post(&self.endpoint);
        if let Some(token) = &self.token {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        match req.send_json(body) {
            Ok(mut resp) => {
                let status = resp.status().as_u16();
                if status == 200 {
                    match resp.body_mut().read_json::<CaptionResponse>() {
                        Ok(r) => Attempt::Done(r.caption),
                        Err(e) => Attempt::Fatal(format!("malformed response: {e}")),
                    }
                } else if status >= 500 {
                    Attempt::Retryable(format!("status {status}"))
                } else {
                    Attempt::Fatal(format!("status {status}"))
                }
            }
            Err(e) if classify_transport(&e) => Attempt::Retryable(e.to_string()),
            Err(e) => Attempt::Fatal(e.to_string()),
        }
    }
}

impl CaptionProvider for HttpProvider {
    fn provider_id(&self) -> &str {
        "http"
    }

    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn token_limit(&self) -> u32 {
        self.token_limit
    }

    fn describe(&self, image: &ImageRecord, prompt: &str) -> Result<String, ProviderError> {
        let body = CaptionRequest {
            image_id: &image.image_id,
            image_uri: image.uri.as_deref(),
            prompt,
            model_id: &self.model_id,
            max_tokens: self.token_limit,
        };
        self.policy
            .run(
                || self.attempt(&body),
                |n, why| {
                    self.retries.fetch_add(1, Ordering::Relaxed);
                    log::warn!("caption {} retry {n}: {why}", image.image_id);
                },
            )
            .map_err(|e| match e {
                RetryError::Exhausted { attempts, last } => ProviderError::Unavailable { attempts, last },
                RetryError::Fatal(msg) => ProviderError::Rejected(msg),
            })
    }
}
