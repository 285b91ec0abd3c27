//! Synthetic benchmark with planted ground truth.
//!
//! Gallery embeddings are random unit vectors grouped into sites. Each query targets a
//! distinct gallery image and its embedding is the target's plus Gaussian
//! noise, so `coarse_noise_sigma` controls how often the target wins the
//! coarse stage. Every image gets a unique identity token that the query
//! text always contains and the image's caption contains with probability
//! `caption_fidelity`. Captions are otherwise random scene words, and a
//! query reuses a few words from its target's scene.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rand::seq::{index, IndexedRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{compare_runs, CompareReport, Qrels};
use crate::caption::{caption_candidates, CaptionCache, FileProvider, PromptTemplate};
use crate::datamodel::{jsonl, write_embedding_file, Caption, ImageRecord, Matrix, Platform, QueryRecord, ResultRecord};
use crate::error::{Error, Result};
use crate::rerank::{rerank, FusedResult, MissingCaptionPolicy, SentenceEmbedder};
use crate::retrieve::{retrieve_queries, CoarseResult};
use crate::store::GalleryStore;

const FILLER: &[&str] = &[
    "building", "roof", "road", "tree", "parking", "field", "court", "lawn", "path", "plaza", "tower", "wall",
    "gate", "fence", "garden", "pond", "bridge", "river", "track", "stadium", "hall", "library", "school",
    "church", "dome", "glass", "brick", "concrete", "white", "grey", "red", "green", "blue", "brown", "dark",
    "bright", "large", "small", "tall", "low", "long", "wide", "narrow", "square", "round", "curved", "flat",
    "north", "south", "east", "west", "left", "right", "top", "bottom", "center", "corner", "edge", "near",
    "beside", "behind", "across", "along", "between", "around", "cars", "trucks", "bus", "rail", "station",
    "office", "campus", "dormitory", "gym", "pool", "tennis", "soccer", "baseball", "running", "shadow",
    "courtyard", "entrance", "lot", "lane", "avenue", "street", "crossing", "block", "row", "cluster",
    "apartment", "house", "shed", "warehouse", "factory", "chimney", "antenna", "solar", "panel", "grass",
    "shrub", "hedge", "forest", "hill", "slope", "terrace", "pier", "harbor",
];

/// Scene words per caption, and how many of them a query reuses.
const CAPTION_WORDS: usize = 16;
const QUERY_WORDS: usize = 4;

/// Gallery images come in sites of this many views scattered around a
/// shared direction, so most coarse confusions are within a site.
const VIEWS_PER_SITE: usize = 8;
const SITE_SPREAD: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n_gallery: usize,
    pub n_queries: usize,
    pub dim: usize,
    pub coarse_noise_sigma: f64,
    pub caption_fidelity: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_gallery: 2000,
            n_queries: 200,
            dim: 32,
            coarse_noise_sigma: 0.22,
            caption_fidelity: 0.9,
            seed: 7,
        }
    }
}

impl SynthSpec {
    pub fn check(&self) -> Result<()> {
        if self.n_queries == 0 || self.n_gallery < self.n_queries {
            return Err(Error::invalid("need n_gallery >= n_queries >= 1"));
        }
        if self.dim == 0 {
            return Err(Error::invalid("dim must be >= 1"));
        }
        if !self.coarse_noise_sigma.is_finite() || self.coarse_noise_sigma < 0.0 {
            return Err(Error::invalid("coarse_noise_sigma must be finite and >= 0"));
        }
        if !(0.0..=1.0).contains(&self.caption_fidelity) {
            return Err(Error::invalid("caption_fidelity must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub gallery: Vec<ImageRecord>,
    pub gallery_matrix: Matrix<f32>,
    pub queries: Vec<QueryRecord>,
    pub query_matrix: Matrix<f32>,
    pub qrels: Qrels,
    /// `(image_id, caption text)` for every gallery image, as the file
    /// caption provider reads them.
    pub captions: Vec<(String, String)>,
}

pub fn identity_token(row: usize) -> String {
    format!("landmark{row:05}")
}

fn unit_gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn filler(rng: &mut ChaCha8Rng, n: usize) -> Vec<&'static str> {
    (0..n).map(|_| *FILLER.choose(rng).expect("non-empty vocabulary")).collect()
}

pub fn generate_synthetic(spec: &SynthSpec) -> Result<SynthData> {
    spec.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut gallery_rows: Vec<Vec<f64>> = Vec::with_capacity(spec.n_gallery);
    while gallery_rows.len() < spec.n_gallery {
        let site = unit_gaussian(&mut rng, spec.dim);
        for _ in 0..VIEWS_PER_SITE.min(spec.n_gallery - gallery_rows.len()) {
            let offset = unit_gaussian(&mut rng, spec.dim);
            let view: Vec<f64> = site.iter().zip(&offset).map(|(c, o)| c + SITE_SPREAD * o).collect();
            let n = view.iter().map(|x| x * x).sum::<f64>().sqrt();
            gallery_rows.push(view.into_iter().map(|x| x / n).collect());
        }
    }
    let gallery: Vec<ImageRecord> = (0..spec.n_gallery)
        .map(|i| ImageRecord {
            image_id: format!("img_{i:05}"),
            platform: Platform::Drone,
            uri: Some(format!("synthetic://img_{i:05}")),
            row_index: i,
        })
        .collect();

    let mut descriptions = Vec::with_capacity(spec.n_gallery);
    let mut captions = Vec::with_capacity(spec.n_gallery);
    for (i, rec) in gallery.iter().enumerate() {
        let scene = filler(&mut rng, CAPTION_WORDS);
        let mut words: Vec<String> = scene.iter().map(|w| w.to_string()).collect();
        if rng.random_bool(spec.caption_fidelity) {
            let at = rng.random_range(0..=words.len());
            words.insert(at, identity_token(i));
        }
        captions.push((rec.image_id.clone(), format!("{}.", words.join(" "))));
        descriptions.push(scene);
    }

    let targets = index::sample(&mut rng, spec.n_gallery, spec.n_queries).into_vec();
    let mut queries = Vec::with_capacity(spec.n_queries);
    let mut query_rows = Vec::with_capacity(spec.n_queries);
    for (qi, &target) in targets.iter().enumerate() {
        let noisy: Vec<f64> = gallery_rows[target]
            .iter()
            .map(|&x| x + spec.coarse_noise_sigma * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let n = noisy.iter().map(|x| x * x).sum::<f64>().sqrt();
        query_rows.push(noisy.into_iter().map(|x| (x / n) as f32).collect::<Vec<f32>>());
        let mut words: Vec<&str> = descriptions[target].choose_multiple(&mut rng, QUERY_WORDS).copied().collect();
        let token = identity_token(target);
        let at = rng.random_range(0..=words.len());
        words.insert(at, &token);
        queries.push(QueryRecord {
            query_id: format!("q_{qi:05}"),
            text: words.join(" "),
            relevant_ids: vec![gallery[target].image_id.clone()],
            row_index: qi,
        });
    }

    let gallery_f32: Vec<Vec<f32>> = gallery_rows
        .iter()
        .map(|r| r.iter().map(|&x| x as f32).collect())
        .collect();
    let qrels = Qrels::from_queries(&queries)?;
    Ok(SynthData {
        gallery,
        gallery_matrix: Matrix::from_rows(&gallery_f32)?,
        queries,
        query_matrix: Matrix::from_rows(&query_rows)?,
        qrels,
        captions,
    })
}

/// File names written by [`SynthData::write_dir`].
#[derive(Debug, Clone, PartialEq)]
pub struct SynthPaths {
    pub gallery_manifest: PathBuf,
    pub gallery_embeddings: PathBuf,
    pub query_manifest: PathBuf,
    pub query_embeddings: PathBuf,
    pub qrels: PathBuf,
    pub caption_source: PathBuf,
}

impl SynthPaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            gallery_manifest: dir.join("gallery.jsonl"),
            gallery_embeddings: dir.join("gallery.cgem"),
            query_manifest: dir.join("queries.jsonl"),
            query_embeddings: dir.join("queries.cgem"),
            qrels: dir.join("qrels.jsonl"),
            caption_source: dir.join("caption_source.jsonl"),
        }
    }
}

impl SynthData {
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<SynthPaths> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let paths = SynthPaths::in_dir(dir);
        jsonl::write_jsonl(&paths.gallery_manifest, &self.gallery)?;
        write_embedding_file(&paths.gallery_embeddings, &self.gallery_matrix)?;
        jsonl::write_jsonl(&paths.query_manifest, &self.queries)?;
        write_embedding_file(&paths.query_embeddings, &self.query_matrix)?;
        self.qrels.write(&paths.qrels)?;
        FileProvider::write_mapping(&paths.caption_source, &self.captions)?;
        Ok(paths)
    }

    pub fn store(&self) -> Result<GalleryStore<f32>> {
        GalleryStore::build(self.gallery.clone(), self.gallery_matrix.clone())
    }
}

/// Both stages of a synthetic run, with the comparison between them.
#[derive(Debug, Clone)]
pub struct SynthRun {
    pub coarse: Vec<CoarseResult>,
    pub reranked: Vec<FusedResult>,
    pub captions: HashMap<String, Caption>,
    pub compare: CompareReport,
}

impl SynthRun {
    pub fn coarse_records(&self) -> Vec<ResultRecord> {
        self.coarse.iter().map(CoarseResult::to_record).collect()
    }

    pub fn reranked_records(&self) -> Vec<ResultRecord> {
        self.reranked.iter().map(FusedResult::to_record).collect()
    }
}

/// Retrieves, captions through the file provider, and reranks every query
/// of `data`, then compares the two stages at `ks`.
pub fn run_synthetic_pipeline(
    data: &SynthData,
    embedder: &dyn SentenceEmbedder,
    alpha: f64,
    k_coarse: usize,
    ks: &[usize],
) -> Result<SynthRun> {
    let store = data.store()?;
    let coarse = retrieve_queries(&store, &data.queries, &data.query_matrix, k_coarse, 4)?;
    let provider = FileProvider::from_pairs(data.captions.iter().cloned(), "synthetic", 256);
    let run = caption_candidates(
        &provider,
        &CaptionCache::in_memory(),
        &coarse,
        &store,
        &PromptTemplate::default(),
        8,
    )?;
    if let Some(f) = run.failures.first() {
        return Err(Error::invalid(format!("caption failed for {}: {}", f.image_id, f.error)));
    }
    let captions: HashMap<String, Caption> = run.captions.into_iter().map(|c| (c.image_id.clone(), c)).collect();
    let texts: HashMap<&str, &str> = data.queries.iter().map(|q| (q.query_id.as_str(), q.text.as_str())).collect();
    let reranked = coarse
        .iter()
        .map(|c| rerank(c, texts[c.query_id.as_str()], &captions, embedder, alpha, MissingCaptionPolicy::Error))
        .collect::<Result<Vec<_>>>()?;
    let coarse_records: Vec<ResultRecord> = coarse.iter().map(CoarseResult::to_record).collect();
    let reranked_records: Vec<ResultRecord> = reranked.iter().map(FusedResult::to_record).collect();
    let compare = compare_runs(&coarse_records, &reranked_records, &data.qrels, ks)?;
    Ok(SynthRun {
        coarse,
        reranked,
        captions,
        compare,
    })
}
