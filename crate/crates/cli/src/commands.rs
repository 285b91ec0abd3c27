use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::time::Instant;

use cgrs_core::caption::{build_provider, caption_candidates, CaptionCache, PromptTemplate};
use cgrs_core::datamodel::{jsonl, read_embedding_file, validate_queries, Caption, ImageRecord, QueryRecord, ResultRecord};
use cgrs_core::eval::{
    alpha_sweep_coarse, compare_runs, format_table, generate_synthetic, measure_rerank_latency, recall_at_k, Qrels,
    SynthSpec,
};
use cgrs_core::losskit::check::run_losscheck;
use cgrs_core::rerank::{build_embedder, rerank as rerank_one, MissingCaptionPolicy};
use cgrs_core::retrieve::{retrieve_queries, CoarseResult};
use cgrs_core::store::GalleryStore;
use cgrs_core::Gallery;
use clap::Args;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{require, PipelineConfig};
use crate::Failure;

type CmdResult = Result<(), Failure>;

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn set_some<T>(slot: &mut Option<T>, value: Option<T>) {
    if value.is_some() {
        *slot = value;
    }
}

fn parse_kind<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(Value::String(s.to_owned())).map_err(|_| format!("unknown kind {s:?}"))
}

/// `dir/name`, with `dir` the configured output directory.
fn default_out(cfg: &PipelineConfig, name: &str) -> PathBuf {
    cfg.paths.output_dir().join(name)
}

/// Fills an unset input path with its default under the output directory.
fn default_in(cfg: &PipelineConfig, slot: &Option<PathBuf>, name: &str) -> PathBuf {
    slot.clone().unwrap_or_else(|| default_out(cfg, name))
}

fn ensure_parent(path: &Path) -> CmdResult {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            std::fs::create_dir_all(dir).map_err(|e| Failure::config(format!("{}: {e}", dir.display())))
        }
        _ => Ok(()),
    }
}

fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

/// Writes `<out>.meta.json` with the effective config and any extra fields.
fn write_meta(out: &Path, command: &str, cfg: &PipelineConfig, extra: Value) -> CmdResult {
    let mut meta = json!({ "command": command, "config": cfg });
    if let (Value::Object(m), Value::Object(x)) = (&mut meta, extra) {
        m.extend(x);
    }
    let path = sidecar(out, ".meta.json");
    let mut bytes = serde_json::to_vec_pretty(&meta).map_err(cgrs_core::Error::from)?;
    bytes.push(b'\n');
    std::fs::write(&path, bytes).map_err(|e| Failure::config(format!("{}: {e}", path.display())))
}

fn write_json(path: &Path, value: &impl Serialize) -> CmdResult {
    ensure_parent(path)?;
    let mut bytes = serde_json::to_vec_pretty(value).map_err(cgrs_core::Error::from)?;
    bytes.push(b'\n');
    std::fs::write(path, bytes).map_err(|e| Failure::config(format!("{}: {e}", path.display())))
}

fn load_store(cfg: &PipelineConfig) -> Result<Gallery, Failure> {
    let records: Vec<ImageRecord> = jsonl::read_jsonl(require(&cfg.paths.gallery, "gallery manifest")?)?;
    let matrix = read_embedding_file(require(&cfg.paths.gallery_embeddings, "gallery embeddings")?)?;
    Ok(GalleryStore::build(records, matrix)?)
}

fn load_queries(cfg: &PipelineConfig) -> Result<Vec<QueryRecord>, Failure> {
    Ok(jsonl::read_jsonl(require(&cfg.paths.queries, "query manifest")?)?)
}

fn load_qrels(cfg: &PipelineConfig) -> Result<Qrels, Failure> {
    match (&cfg.paths.qrels, &cfg.paths.queries) {
        (Some(path), _) => Ok(Qrels::read(path)?),
        (None, Some(_)) => Ok(Qrels::from_queries(&load_queries(cfg)?)?),
        (None, None) => Err(Failure::config("no qrels: pass --qrels or --queries")),
    }
}

fn load_results(path: &Path) -> Result<Vec<ResultRecord>, Failure> {
    Ok(jsonl::read_jsonl(path)?)
}

fn load_coarse(path: &Path) -> Result<Vec<CoarseResult>, Failure> {
    load_results(path)?
        .iter()
        .map(|r| CoarseResult::from_record(r).map_err(Failure::from))
        .collect()
}

fn load_captions(path: &Path) -> Result<HashMap<String, Caption>, Failure> {
    let captions: Vec<Caption> = jsonl::read_jsonl(path)?;
    Ok(captions.into_iter().map(|c| (c.image_id.clone(), c)).collect())
}

fn label_of(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into())
}

#[derive(Debug, Args)]
pub struct GalleryFlags {
    /// Gallery manifest, one image record per line.
    #[arg(long)]
    pub gallery: Option<PathBuf>,
    /// Gallery embedding file.
    #[arg(long)]
    pub gallery_embeddings: Option<PathBuf>,
}

impl GalleryFlags {
    fn apply(self, cfg: &mut PipelineConfig) {
        set_some(&mut cfg.paths.gallery, self.gallery);
        set_some(&mut cfg.paths.gallery_embeddings, self.gallery_embeddings);
    }
}

#[derive(Debug, Args)]
pub struct ProviderFlags {
    /// Caption provider: mock, file or http.
    #[arg(long, value_parser = parse_kind::<cgrs_core::caption::ProviderKind>)]
    pub provider: Option<cgrs_core::caption::ProviderKind>,
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Caption mapping for the file provider.
    #[arg(long)]
    pub source: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub token_limit: Option<u32>,
    #[arg(long)]
    pub max_concurrency: Option<usize>,
    #[arg(long)]
    pub max_retries: Option<u32>,
    #[arg(long)]
    pub backoff_ms: Option<u64>,
    #[arg(long)]
    pub timeout_ms: Option<u64>,
}

impl ProviderFlags {
    fn apply(self, cfg: &mut PipelineConfig) {
        let p = &mut cfg.provider;
        set(&mut p.provider_id, self.provider);
        set_some(&mut p.endpoint, self.endpoint);
        set_some(&mut p.source, self.source);
        set(&mut p.model_id, self.model);
        set(&mut p.token_limit, self.token_limit);
        set(&mut p.max_concurrency, self.max_concurrency);
        set(&mut p.max_retries, self.max_retries);
        set(&mut p.backoff_base_ms, self.backoff_ms);
        set(&mut p.timeout_ms, self.timeout_ms);
    }
}

#[derive(Debug, Args)]
pub struct EmbedderFlags {
    /// Sentence embedder: mock-hash, file or http.
    #[arg(long, value_parser = parse_kind::<cgrs_core::rerank::EmbedderKind>)]
    pub embedder: Option<cgrs_core::rerank::EmbedderKind>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub embed_endpoint: Option<String>,
    /// Embedding file for the file embedder.
    #[arg(long)]
    pub embed_file: Option<PathBuf>,
    /// Text digest manifest for the file embedder.
    #[arg(long)]
    pub embed_manifest: Option<PathBuf>,
}

impl EmbedderFlags {
    fn apply(self, cfg: &mut PipelineConfig) {
        let e = &mut cfg.embedder;
        set(&mut e.embedder_id, self.embedder);
        set(&mut e.dim, self.embed_dim);
        set_some(&mut e.endpoint, self.embed_endpoint);
        set_some(&mut e.embeddings, self.embed_file);
        set_some(&mut e.manifest, self.embed_manifest);
    }
}

#[derive(Debug, Args)]
pub struct QrelsFlags {
    /// Ground-truth file; derived from the query manifest when absent.
    #[arg(long)]
    pub qrels: Option<PathBuf>,
    /// Query manifest.
    #[arg(long)]
    pub queries: Option<PathBuf>,
    /// Cutoffs to report, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub k: Option<Vec<usize>>,
}

impl QrelsFlags {
    fn apply(self, cfg: &mut PipelineConfig) {
        set_some(&mut cfg.paths.qrels, self.qrels);
        set_some(&mut cfg.paths.queries, self.queries);
        set(&mut cfg.fusion.k_report, self.k);
    }
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    gallery: GalleryFlags,
    /// Where to write the store summary (default: <output_dir>/store.json).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Serialize)]
struct StoreSummary<'a> {
    n_images: usize,
    dim: usize,
    gallery: &'a Path,
    gallery_embeddings: &'a Path,
    platforms: std::collections::BTreeMap<String, usize>,
}

pub fn ingest(args: IngestArgs, cfg: &mut PipelineConfig) -> CmdResult {
    args.gallery.apply(cfg);
    set_some(&mut cfg.paths.output_dir, args.output_dir);
    cfg.check()?;
    let store = load_store(cfg)?;
    let mut platforms = std::collections::BTreeMap::new();
    for r in store.records() {
        let name = serde_json::to_value(r.platform).map_err(cgrs_core::Error::from)?;
        *platforms.entry(name.as_str().unwrap_or_default().to_owned()).or_insert(0) += 1;
    }
    let out = args.out.unwrap_or_else(|| default_out(cfg, "store.json"));
    let summary = StoreSummary {
        n_images: store.len(),
        dim: store.dim(),
        gallery: require(&cfg.paths.gallery, "gallery manifest")?,
        gallery_embeddings: require(&cfg.paths.gallery_embeddings, "gallery embeddings")?,
        platforms,
    };
    write_json(&out, &summary)?;
    write_meta(&out, "ingest", cfg, json!({}))?;
    println!("{} images, dim {}", store.len(), store.dim());
    Ok(())
}

#[derive(Debug, Args)]
pub struct RetrieveArgs {
    #[command(flatten)]
    gallery: GalleryFlags,
    /// Query manifest.
    #[arg(long)]
    queries: Option<PathBuf>,
    /// Query embedding file, rows indexed by the manifest's row_index.
    #[arg(long)]
    query_embeddings: Option<PathBuf>,
    /// Candidates per query.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    shards: Option<usize>,
    /// Coarse result file to write (default: <output_dir>/coarse.jsonl).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

pub fn retrieve(args: RetrieveArgs, cfg: &mut PipelineConfig) -> CmdResult {
    args.gallery.apply(cfg);
    set_some(&mut cfg.paths.queries, args.queries);
    set_some(&mut cfg.paths.query_embeddings, args.query_embeddings);
    set_some(&mut cfg.paths.output_dir, args.output_dir);
    set(&mut cfg.fusion.k_coarse, args.k);
    if args.k.is_some() {
        cfg.fusion.k_report.retain(|&k| k <= cfg.fusion.k_coarse);
    }
    set(&mut cfg.n_shards, args.shards);
    cfg.check()?;
    let out = args.out.or_else(|| cfg.paths.coarse.clone()).unwrap_or_else(|| default_out(cfg, "coarse.jsonl"));
    cfg.paths.coarse = Some(out.clone());

    let store = load_store(cfg)?;
    let queries = load_queries(cfg)?;
    let qmatrix = read_embedding_file(require(&cfg.paths.query_embeddings, "query embeddings")?)?;
    let report = validate_queries(&queries, qmatrix.rows());
    if !report.is_ok() {
        return Err(cgrs_core::Error::Validation(report).into());
    }
    let results = retrieve_queries(&store, &queries, &qmatrix, cfg.fusion.k_coarse, cfg.n_shards)?;
    let records: Vec<ResultRecord> = results.iter().map(CoarseResult::to_record).collect();
    ensure_parent(&out)?;
    jsonl::write_jsonl(&out, &records)?;
    write_meta(&out, "retrieve", cfg, json!({ "n_queries": records.len() }))?;
    println!(
        "{} queries, top {} of {} images -> {}",
        records.len(),
        cfg.fusion.k_coarse,
        store.len(),
        out.display()
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct CaptionArgs {
    #[command(flatten)]
    gallery: GalleryFlags,
    #[command(flatten)]
    provider: ProviderFlags,
    /// Coarse result file whose candidates are captioned.
    #[arg(long)]
    coarse: Option<PathBuf>,
    /// Caption cache (append-only JSONL).
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Prompt template file; the built-in prompt is used when absent.
    #[arg(long)]
    prompt: Option<PathBuf>,
    /// Caption file to write (default: <output_dir>/captions.jsonl).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

pub fn caption(args: CaptionArgs, cfg: &mut PipelineConfig) -> CmdResult {
    args.gallery.apply(cfg);
    args.provider.apply(cfg);
    set_some(&mut cfg.paths.coarse, args.coarse);
    cfg.paths.coarse = Some(default_in(cfg, &cfg.paths.coarse, "coarse.jsonl"));
    set_some(&mut cfg.paths.cache, args.cache);
    set_some(&mut cfg.paths.prompt, args.prompt);
    set_some(&mut cfg.paths.output_dir, args.output_dir);
    cfg.check()?;
    let out = args.out.or_else(|| cfg.paths.captions.clone()).unwrap_or_else(|| default_out(cfg, "captions.jsonl"));
    cfg.paths.captions = Some(out.clone());
    let cache_path = cfg.paths.cache.clone().unwrap_or_else(|| default_out(cfg, "caption_cache.jsonl"));
    cfg.paths.cache = Some(cache_path.clone());

    let template = match &cfg.paths.prompt {
        Some(p) => PromptTemplate::new(
            std::fs::read_to_string(p).map_err(|e| Failure::config(format!("{}: {e}", p.display())))?,
        ),
        None => PromptTemplate::default(),
    };
    let store = load_store(cfg)?;
    let coarse = load_coarse(require(&cfg.paths.coarse, "coarse results")?)?;
    let provider = build_provider(&cfg.provider)?;
    ensure_parent(&cache_path)?;
    let cache = CaptionCache::open(&cache_path)?;
    let run = caption_candidates(
        provider.as_ref(),
        &cache,
        &coarse,
        &store,
        &template,
        cfg.provider.max_concurrency,
    )?;
    ensure_parent(&out)?;
    jsonl::write_jsonl(&out, &run.captions)?;
    write_meta(
        &out,
        "caption",
        cfg,
        json!({ "prompt_hash": template.hash(), "n_captions": run.captions.len(), "n_failures": run.failures.len() }),
    )?;
    println!(
        "fetched: {}, cached: {}, failed: {}",
        run.fetched,
        run.cached,
        run.failures.len()
    );
    if run.failures.is_empty() {
        return Ok(());
    }
    let report = sidecar(&out, ".failures.jsonl");
    jsonl::write_jsonl(&report, &run.failures)?;
    for f in &run.failures {
        eprintln!("{}: {}", f.image_id, f.error);
    }
    Err(Failure::new(
        Failure::PROVIDER,
        format!("{} candidate(s) left uncaptioned, see {}", run.failures.len(), report.display()),
    ))
}

#[derive(Debug, Args)]
pub struct RerankArgs {
    #[command(flatten)]
    embedder: EmbedderFlags,
    #[arg(long)]
    coarse: Option<PathBuf>,
    #[arg(long)]
    captions: Option<PathBuf>,
    /// Query manifest, for the query texts.
    #[arg(long)]
    queries: Option<PathBuf>,
    /// Weight of the coarse score in the fused score.
    #[arg(long)]
    alpha: Option<f64>,
    /// On a missing caption: error, or fallback to a semantic score of -1.
    #[arg(long, value_parser = parse_kind::<MissingCaptionPolicy>, default_value = "error")]
    missing: MissingCaptionPolicy,
    /// Also write per-candidate score breakdowns here.
    #[arg(long)]
    breakdown: Option<PathBuf>,
    /// Final result file (default: <output_dir>/reranked.jsonl).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

pub fn rerank(args: RerankArgs, cfg: &mut PipelineConfig) -> CmdResult {
    args.embedder.apply(cfg);
    set_some(&mut cfg.paths.coarse, args.coarse);
    set_some(&mut cfg.paths.captions, args.captions);
    set_some(&mut cfg.paths.queries, args.queries);
    set_some(&mut cfg.paths.output_dir, args.output_dir);
    cfg.paths.coarse = Some(default_in(cfg, &cfg.paths.coarse, "coarse.jsonl"));
    cfg.paths.captions = Some(default_in(cfg, &cfg.paths.captions, "captions.jsonl"));
    set(&mut cfg.fusion.alpha, args.alpha);
    cfg.check()?;
    let out = args.out.or_else(|| cfg.paths.reranked.clone()).unwrap_or_else(|| default_out(cfg, "reranked.jsonl"));
    cfg.paths.reranked = Some(out.clone());

    let coarse = load_coarse(require(&cfg.paths.coarse, "coarse results")?)?;
    let captions = load_captions(require(&cfg.paths.captions, "captions")?)?;
    let texts: HashMap<String, String> = load_queries(cfg)?.into_iter().map(|q| (q.query_id, q.text)).collect();
    let embedder = build_embedder(&cfg.embedder)?;

    let mut fused = Vec::with_capacity(coarse.len());
    let mut latencies = Vec::with_capacity(coarse.len());
    for c in &coarse {
        let text = texts
            .get(&c.query_id)
            .ok_or_else(|| Failure::new(Failure::VALIDATION, format!("query {} not in the query manifest", c.query_id)))?;
        let start = Instant::now();
        fused.push(rerank_one(c, text, &captions, embedder.as_ref(), cfg.fusion.alpha, args.missing)?);
        latencies.push(start.elapsed().as_secs_f64() * 1e3);
    }
    let records: Vec<ResultRecord> = fused.iter().map(|f| f.to_record()).collect();
    ensure_parent(&out)?;
    jsonl::write_jsonl(&out, &records)?;
    if let Some(path) = &args.breakdown {
        let rows: Vec<_> = fused.iter().flat_map(|f| f.breakdown()).collect();
        ensure_parent(path)?;
        jsonl::write_jsonl(path, &rows)?;
    }
    let used: BTreeSet<&str> = coarse
        .iter()
        .flat_map(|c| c.candidates.ids())
        .filter_map(|id| captions.get(id))
        .map(|c| c.prompt_hash.as_str())
        .collect();
    let prompt_hash = match used.len() {
        1 => json!(used.iter().next()),
        _ => json!(used),
    };
    let fallbacks: usize = fused.iter().map(|f| f.fallbacks()).sum();
    write_meta(
        &out,
        "rerank",
        cfg,
        json!({
            "alpha": cfg.fusion.alpha,
            "embedder_id": embedder.embedder_id(),
            "prompt_hash": prompt_hash,
            "missing_caption_policy": args.missing,
            "fallbacks": fallbacks,
        }),
    )?;
    if fallbacks > 0 {
        log::warn!("{fallbacks} candidate(s) scored without a caption");
    }
    let mean = latencies.iter().sum::<f64>() / latencies.len().max(1) as f64;
    println!(
        "{} queries reranked at alpha {} -> {} (mean {:.3} ms/query)",
        records.len(),
        cfg.fusion.alpha,
        out.display(),
        mean
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    qrels: QrelsFlags,
    /// Result file to score (default: the configured reranked file).
    #[arg(long)]
    results: Option<PathBuf>,
    /// Write the JSON report here.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Also time the local reranker over this many trials.
    #[arg(long)]
    latency_trials: Option<usize>,
}

pub fn eval(args: EvalArgs, cfg: &mut PipelineConfig) -> CmdResult {
    args.qrels.apply(cfg);
    let path = args
        .results
        .unwrap_or_else(|| default_in(cfg, &cfg.paths.reranked, "reranked.jsonl"));
    let qrels = load_qrels(cfg)?;
    let mut report = recall_at_k(&load_results(&path)?, &qrels, &cfg.fusion.k_report)?;
    if let Some(n) = args.latency_trials {
        report.latency_ms = Some(measure_rerank_latency(cfg.fusion.k_coarse, n, cfg.embedder.dim)?);
    }
    print!("{}", format_table(&[(&label_of(&path), &report)]));
    if !report.truncated_k.is_empty() {
        log::warn!("rankings shorter than k for {:?}; scored over the available prefix", report.truncated_k);
    }
    if let Some(l) = &report.latency_ms {
        println!("rerank latency: mean {:.3} ms, p99 {:.3} ms over {} trials", l.mean_ms, l.p99_ms, l.n_trials);
    }
    if let Some(json_path) = &args.json {
        write_json(json_path, &report.to_json())?;
        write_meta(json_path, "eval", cfg, json!({ "results": path }))?;
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    qrels: QrelsFlags,
    #[arg(long)]
    coarse: Option<PathBuf>,
    #[arg(long)]
    reranked: Option<PathBuf>,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Serialize)]
struct CompareJson {
    deltas: std::collections::BTreeMap<String, f64>,
    improved: usize,
    degraded: usize,
    unchanged: usize,
    coarse: cgrs_core::eval::ReportJson,
    reranked: cgrs_core::eval::ReportJson,
}

pub fn compare(args: CompareArgs, cfg: &mut PipelineConfig) -> CmdResult {
    args.qrels.apply(cfg);
    set_some(&mut cfg.paths.coarse, args.coarse);
    set_some(&mut cfg.paths.reranked, args.reranked);
    cfg.paths.coarse = Some(default_in(cfg, &cfg.paths.coarse, "coarse.jsonl"));
    cfg.paths.reranked = Some(default_in(cfg, &cfg.paths.reranked, "reranked.jsonl"));
    let qrels = load_qrels(cfg)?;
    let coarse = load_results(require(&cfg.paths.coarse, "coarse results")?)?;
    let reranked = load_results(require(&cfg.paths.reranked, "reranked results")?)?;
    let report = compare_runs(&coarse, &reranked, &qrels, &cfg.fusion.k_report)?;
    print!(
        "{}",
        format_table(&[("coarse", &report.coarse), ("reranked", &report.reranked)])
    );
    let deltas: Vec<String> = report.deltas.iter().map(|(k, d)| format!("R@{k} {d:+.2}")).collect();
    println!("delta: {}", deltas.join(", "));
    println!(
        "improved: {}, degraded: {}, unchanged: {}",
        report.improved, report.degraded, report.unchanged
    );
    if let Some(path) = &args.json {
        let out = CompareJson {
            deltas: report.deltas.iter().map(|(k, d)| (k.to_string(), *d)).collect(),
            improved: report.improved,
            degraded: report.degraded,
            unchanged: report.unchanged,
            coarse: report.coarse.to_json(),
            reranked: report.reranked.to_json(),
        };
        write_json(path, &out)?;
        write_meta(path, "compare", cfg, json!({}))?;
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    qrels: QrelsFlags,
    #[command(flatten)]
    embedder: EmbedderFlags,
    #[arg(long)]
    coarse: Option<PathBuf>,
    #[arg(long)]
    captions: Option<PathBuf>,
    /// Fusion weights to evaluate, comma separated (default 0.0, 0.1, ..., 1.0).
    #[arg(long, value_delimiter = ',')]
    alphas: Option<Vec<f64>>,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Serialize)]
struct SweepJsonRow {
    alpha: f64,
    report: cgrs_core::eval::ReportJson,
}

pub fn sweep(args: SweepArgs, cfg: &mut PipelineConfig) -> CmdResult {
    args.qrels.apply(cfg);
    args.embedder.apply(cfg);
    set_some(&mut cfg.paths.coarse, args.coarse);
    set_some(&mut cfg.paths.captions, args.captions);
    cfg.paths.coarse = Some(default_in(cfg, &cfg.paths.coarse, "coarse.jsonl"));
    cfg.paths.captions = Some(default_in(cfg, &cfg.paths.captions, "captions.jsonl"));
    let alphas = args.alphas.unwrap_or_else(|| (0..=10).map(|i| i as f64 / 10.0).collect());
    let qrels = load_qrels(cfg)?;
    let coarse = load_coarse(require(&cfg.paths.coarse, "coarse results")?)?;
    let captions = load_captions(require(&cfg.paths.captions, "captions")?)?;
    let texts: HashMap<String, String> = load_queries(cfg)?.into_iter().map(|q| (q.query_id, q.text)).collect();
    let embedder = build_embedder(&cfg.embedder)?;
    let rows = alpha_sweep_coarse(&coarse, &texts, &captions, embedder.as_ref(), &qrels, &alphas, &cfg.fusion.k_report)?;
    let labels: Vec<String> = rows.iter().map(|r| format!("alpha={:.2}", r.alpha)).collect();
    let table: Vec<(&str, &cgrs_core::eval::MetricsReport)> =
        labels.iter().zip(&rows).map(|(l, r)| (l.as_str(), &r.report)).collect();
    print!("{}", format_table(&table));
    if let Some(&k) = cfg.fusion.k_report.first() {
        if let Some(best) = rows.iter().max_by(|a, b| {
            a.report.recall_at[&k]
                .total_cmp(&b.report.recall_at[&k])
                .then(b.alpha.total_cmp(&a.alpha))
        }) {
            println!("best R@{k}: {:.2} at alpha {}", best.report.recall_at[&k], best.alpha);
        }
    }
    if let Some(path) = &args.json {
        let out: Vec<SweepJsonRow> = rows
            .iter()
            .map(|r| SweepJsonRow {
                alpha: r.alpha,
                report: r.report.to_json(),
            })
            .collect();
        write_json(path, &out)?;
        write_meta(path, "sweep", cfg, json!({ "embedder_id": embedder.embedder_id() }))?;
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct LosscheckArgs {
    /// Random instances per gradient check.
    #[arg(long, default_value_t = 100)]
    instances: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    json: Option<PathBuf>,
}

pub fn losscheck(args: LosscheckArgs, cfg: &mut PipelineConfig) -> CmdResult {
    set(&mut cfg.seed, args.seed);
    let report = run_losscheck(args.instances, cfg.seed);
    for c in &report.checks {
        println!(
            "{:<26} {:>12.3e}  tol {:<8.0e} {}",
            c.name,
            c.observed,
            c.tolerance,
            if c.passed { "ok" } else { "FAIL" }
        );
    }
    if let Some(path) = &args.json {
        write_json(path, &report)?;
        write_meta(path, "losscheck", cfg, json!({}))?;
    }
    let failed = report.checks.iter().filter(|c| !c.passed).count();
    if failed == 0 {
        println!("all checks passed");
        Ok(())
    } else {
        Err(Failure::new(Failure::CHECK, format!("{failed} check(s) failed")))
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Directory to write the benchmark into.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_gallery: Option<usize>,
    #[arg(long)]
    n_queries: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    /// Noise added to each query's target embedding.
    #[arg(long)]
    sigma: Option<f64>,
    /// Probability that a caption carries its image's identity token.
    #[arg(long)]
    fidelity: Option<f64>,
}

pub fn synth(args: SynthArgs, cfg: &mut PipelineConfig) -> CmdResult {
    set(&mut cfg.seed, args.seed);
    let dir = args.out.or_else(|| cfg.paths.output_dir.clone()).ok_or_else(|| Failure::config("no output directory: pass --out"))?;
    let defaults = SynthSpec::default();
    let spec = SynthSpec {
        n_gallery: args.n_gallery.unwrap_or(defaults.n_gallery),
        n_queries: args.n_queries.unwrap_or(defaults.n_queries),
        dim: args.dim.unwrap_or(defaults.dim),
        coarse_noise_sigma: args.sigma.unwrap_or(defaults.coarse_noise_sigma),
        caption_fidelity: args.fidelity.unwrap_or(defaults.caption_fidelity),
        seed: cfg.seed,
    };
    let data = generate_synthetic(&spec)?;
    data.write_dir(&dir)?;
    write_json(&dir.join("synth.json"), &spec)?;
    let config = format!(
        "seed = {seed}\n\n[paths]\ngallery = \"gallery.jsonl\"\ngallery_embeddings = \"gallery.cgem\"\n\
         queries = \"queries.jsonl\"\nquery_embeddings = \"queries.cgem\"\nqrels = \"qrels.jsonl\"\n\
         output_dir = \"run\"\n\n[provider]\nprovider_id = \"file\"\nsource = \"caption_source.jsonl\"\n\
         model_id = \"synthetic\"\n",
        seed = spec.seed
    );
    std::fs::write(dir.join("cgrs.toml"), config).map_err(|e| Failure::config(format!("{}: {e}", dir.display())))?;
    println!(
        "{} images, {} queries, dim {} -> {}",
        spec.n_gallery,
        spec.n_queries,
        spec.dim,
        dir.display()
    );
    Ok(())
}
