use std::path::{Path, PathBuf};

use cgrs_core::caption::ProviderConfig;
use cgrs_core::datamodel::FusionConfig;
use cgrs_core::rerank::EmbedderConfig;
use serde::{Deserialize, Serialize};

use crate::Failure;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub gallery: Option<PathBuf>,
    pub gallery_embeddings: Option<PathBuf>,
    pub queries: Option<PathBuf>,
    pub query_embeddings: Option<PathBuf>,
    pub coarse: Option<PathBuf>,
    pub reranked: Option<PathBuf>,
    pub captions: Option<PathBuf>,
    pub cache: Option<PathBuf>,
    pub qrels: Option<PathBuf>,
    pub prompt: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

impl Paths {
    fn rebase(&mut self, base: &Path) {
        for p in [
            &mut self.gallery,
            &mut self.gallery_embeddings,
            &mut self.queries,
            &mut self.query_embeddings,
            &mut self.coarse,
            &mut self.reranked,
            &mut self.captions,
            &mut self.cache,
            &mut self.qrels,
            &mut self.prompt,
            &mut self.output_dir,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| PathBuf::from("."))
    }
}

/// Everything a subcommand may read. Loaded from `--config`, then
/// overridden field by field by explicit flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub n_shards: usize,
    pub seed: u64,
    /// Weight of the spatial term in the total training loss.
    pub lambda: f64,
    pub paths: Paths,
    pub fusion: FusionConfig,
    pub provider: ProviderConfig,
    pub embedder: EmbedderConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            n_shards: 1,
            seed: 7,
            lambda: cgrs_core::losskit::DEFAULT_LAMBDA,
            paths: Paths::default(),
            fusion: FusionConfig::default(),
            provider: ProviderConfig::default(),
            embedder: EmbedderConfig::default(),
        }
    }
}

impl PipelineConfig {
    /// Reads a TOML config. Relative paths inside it resolve against the
    /// directory holding the file.
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
        let mut cfg: Self = toml::from_str(&text).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.paths.rebase(base);
        if let Some(src) = cfg.provider.source.as_mut().filter(|p| p.is_relative()) {
            *src = base.join(&*src);
        }
        for p in [&mut cfg.embedder.embeddings, &mut cfg.embedder.manifest].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn check(&self) -> Result<(), Failure> {
        if self.n_shards == 0 {
            return Err(Failure::config("n_shards must be >= 1"));
        }
        self.fusion.check().map_err(|e| Failure::config(e.to_string()))?;
        self.provider.check().map_err(|e| Failure::config(e.to_string()))?;
        Ok(())
    }
}

pub fn require<'a>(value: &'a Option<PathBuf>, what: &str) -> Result<&'a Path, Failure> {
    value
        .as_deref()
        .ok_or_else(|| Failure::config(format!("no {what} path: pass the flag or set it in the config")))
}
