//! Acceptance suite: one PASS/FAIL line per criterion. Runs without the
//! test harness so the lines always reach stdout; exits nonzero if any
//! criterion fails.
//!
//! Run with `cargo test -p cgrs-core --test acceptance`.

mod common;

use std::collections::HashMap;
use std::path::Path;
use std::time::{Duration, Instant};

use cgrs_core::caption::{
    caption_candidates, fetch_caption, CacheKey, CaptionCache, FileProvider, HttpProvider, MappingLine,
    ProviderConfig, ProviderKind, PromptTemplate,
};
use cgrs_core::datamodel::{
    jsonl, read_embedding_file, write_embedding_file, Caption, EmbeddingVector, ImageRecord, Matrix, Platform,
    QueryRecord, ResultRecord, ScoredId,
};
use cgrs_core::eval::{generate_synthetic, measure_rerank_latency, run_synthetic_pipeline, QrelRecord, Qrels, SynthRun, SynthSpec};
use cgrs_core::losskit::check::{check_grounding, check_itc, check_itm, check_spatial};
use cgrs_core::losskit::{itc_loss, itm_loss, spatial_loss, BatchEmbeddings, MatchLabel, SpatialPair};
use cgrs_core::rerank::{rerank, semantic_similarity, DigestRow, FileEmbedder, MissingCaptionPolicy, MockHashEmbedder, ScoreBreakdown};
use cgrs_core::retrieve::{retrieve_batch, retrieve_topk, retrieve_topk_sharded};
use common::{as_pairs, coarse_of, gallery_of, oracle_topk, random_gallery, random_vector, CountingProvider, ScriptedServer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::Serialize;

type Verdict = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn topk_oracle_equivalence() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC1);
    let mut compared = 0;
    for instance in 0..1000 {
        let n = rng.random_range(1..=2000);
        let dim = rng.random_range(1..=128);
        let dup = if instance % 2 == 0 { 0.0 } else { 0.2 };
        let store = random_gallery::<f32>(&mut rng, n, dim, dup);
        let q: Vec<f32> = random_vector(&mut rng, dim);
        let query = EmbeddingVector::new(q.clone()).map_err(|e| e.to_string())?;
        for k in [1, 5, 20] {
            let got = retrieve_topk(&store, &query, k).map_err(|e| e.to_string())?;
            let want = oracle_topk(&store, &q, k);
            ensure(as_pairs(&got) == want, || format!("instance {instance}: N={n} dim={dim} k={k} differs"))?;
            compared += 1;
        }
    }
    Ok(format!("{compared} rankings identical to full sort"))
}

fn shard_determinism() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC2);
    for instance in 0..100 {
        let n = rng.random_range(1..=1500);
        let dim = rng.random_range(1..=64);
        let k = rng.random_range(1..=40);
        let store = random_gallery::<f32>(&mut rng, n, dim, 0.15);
        let rows: Vec<Vec<f32>> = (0..4).map(|_| random_vector(&mut rng, dim)).collect();
        let queries = Matrix::from_rows(&rows).map_err(|e| e.to_string())?;
        let base = retrieve_batch(&store, &queries, k, 1).map_err(|e| e.to_string())?;
        for shards in [2, 4, 8] {
            let got = retrieve_batch(&store, &queries, k, shards).map_err(|e| e.to_string())?;
            ensure(got == base, || format!("instance {instance}: shards={shards} differs"))?;
            let single = retrieve_topk_sharded(&store, &queries.embedding(0).unwrap(), k, shards).unwrap();
            ensure(single == base[0], || format!("instance {instance}: single query shards={shards} differs"))?;
        }
    }
    Ok("100 instances, 0 mismatches across 1/2/4/8 shards".into())
}

#[allow(clippy::approx_constant)]
fn gradient_fidelity() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC3);
    let mut parts = Vec::new();
    for (name, err, tol) in [
        ("itc", check_itc(100, &mut rng), 1e-4),
        ("grounding", check_grounding(100, &mut rng), 1e-4),
        ("itm", check_itm(100, &mut rng), 1e-6),
        ("spatial", check_spatial(100, &mut rng), 1e-6),
    ] {
        ensure(err.is_finite() && err < tol, || format!("{name} gradient error {err:.3e} >= {tol:.0e}"))?;
        parts.push(format!("{name} {err:.1e}"));
    }

    let single = Matrix::from_rows(&[vec![0.3f64, -0.4, 0.8]]).unwrap();
    let v = itc_loss(&BatchEmbeddings::new(single.clone(), single, 0.07).unwrap()).loss;
    ensure(v.abs() <= 1e-12, || format!("itc N=1 gave {v}"))?;
    let id = Matrix::from_rows(&[vec![1.0f64, 0.0], vec![0.0, 1.0]]).unwrap();
    let v = itc_loss(&BatchEmbeddings::new(id.clone(), id, 1.0).unwrap()).loss;
    ensure((v - 0.313262).abs() <= 1e-5, || format!("itc 2x2 identity gave {v}"))?;
    let v: f64 = itm_loss(&[MatchLabel::new(true, 0.5).unwrap()]).unwrap().0;
    ensure((v - 0.693147).abs() <= 1e-6, || format!("itm(1, 0.5) gave {v}"))?;
    for label in 0..9 {
        let v: f64 = spatial_loss(&[SpatialPair::new(label, [1.0 / 9.0; 9]).unwrap()]).unwrap().0;
        ensure((v - 2.197225).abs() <= 1e-6, || format!("spatial uniform gave {v}"))?;
    }
    Ok(format!("max rel err: {}; closed forms ok", parts.join(", ")))
}

fn small_spec(seed: u64) -> SynthSpec {
    SynthSpec {
        n_gallery: 300,
        n_queries: 10,
        dim: 16,
        seed,
        ..SynthSpec::default()
    }
}

fn fusion_endpoints(runs: &[(cgrs_core::eval::SynthData, SynthRun)]) -> Verdict {
    let e = MockHashEmbedder::new(384).unwrap();
    let mut instances = 0;
    for (data, run) in runs.iter().take(10) {
        let texts: HashMap<&str, &str> = data.queries.iter().map(|q| (q.query_id.as_str(), q.text.as_str())).collect();
        for c in &run.coarse {
            let text = texts[c.query_id.as_str()];
            let coarse_only = rerank(c, text, &run.captions, &e, 1.0, MissingCaptionPolicy::Error).unwrap();
            let got: Vec<&str> = coarse_only.candidates.iter().map(|x| x.image_id.as_str()).collect();
            let want: Vec<&str> = c.candidates.ids().collect();
            ensure(got == want, || format!("{}: alpha=1 differs from coarse", c.query_id))?;

            let sem_only = rerank(c, text, &run.captions, &e, 0.0, MissingCaptionPolicy::Error).unwrap();
            let mut expected: Vec<(f64, &str)> = c
                .candidates
                .ids()
                .map(|id| (semantic_similarity(&e, text, &run.captions[id]).unwrap(), id))
                .collect();
            expected.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(b.1)));
            let got: Vec<&str> = sem_only.candidates.iter().map(|x| x.image_id.as_str()).collect();
            ensure(got == expected.iter().map(|x| x.1).collect::<Vec<_>>(), || {
                format!("{}: alpha=0 differs from caption ordering", c.query_id)
            })?;
            instances += 1;
        }
    }
    ensure(instances >= 100, || format!("only {instances} instances"))?;
    Ok(format!("{instances} instances, 0 mismatches"))
}

fn recall_ceiling(runs: &[&SynthRun]) -> Verdict {
    for (i, run) in runs.iter().enumerate() {
        let c = &run.compare;
        ensure(c.coarse.hits_at(20) == c.reranked.hits_at(20), || format!("run {i}: hit sets at 20 differ"))?;
        let ceiling = c.coarse.recall(20).unwrap();
        for k in [1, 5, 10] {
            let r = c.reranked.recall(k).unwrap();
            ensure(r <= ceiling, || format!("run {i}: reranked R@{k} {r} above coarse R@20 {ceiling}"))?;
        }
    }
    Ok(format!("{} runs", runs.len()))
}

fn synthetic_improvement(run: &SynthRun) -> Verdict {
    let c = &run.compare;
    let (r1, r20) = (c.coarse.recall(1).unwrap(), c.coarse.recall(20).unwrap());
    let after = c.reranked.recall(1).unwrap();
    ensure((35.0..=55.0).contains(&r1), || format!("coarse R@1 {r1:.2} outside [35, 55]"))?;
    ensure(r20 >= 90.0, || format!("coarse R@20 {r20:.2} below 90"))?;
    ensure(after - r1 >= 10.0, || format!("R@1 delta {:.2} below 10", after - r1))?;
    ensure(c.improved >= 5 * c.degraded, || format!("improved {} < 5 x degraded {}", c.improved, c.degraded))?;
    Ok(format!(
        "coarse R@1 {r1:.2}, R@20 {r20:.2}; reranked R@1 {after:.2} (+{:.2}); improved {}, degraded {}",
        after - r1,
        c.improved,
        c.degraded
    ))
}

fn rerank_latency() -> Verdict {
    let stats = measure_rerank_latency(20, 1000, 384).map_err(|e| e.to_string())?;
    ensure(stats.p99_ms < 10.0, || format!("p99 {:.3} ms", stats.p99_ms))?;
    Ok(format!("p50 {:.3} ms, p99 {:.3} ms", stats.p50_ms, stats.p99_ms))
}

fn caption_client() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let cache_path = dir.path().join("cache.jsonl");
    let ids: Vec<String> = (0..40).map(|i| format!("img_{i:02}")).collect();
    let gallery = gallery_of(&ids);
    let coarse = vec![coarse_of("q1", &ids[0..20]), coarse_of("q2", &ids[10..30])];
    let template = PromptTemplate::default();

    let cold = CountingProvider::new(Duration::ZERO, []);
    caption_candidates(&cold, &CaptionCache::open(&cache_path).unwrap(), &coarse, &gallery, &template, 4).unwrap();
    let warm = CountingProvider::new(Duration::ZERO, []);
    let run = caption_candidates(&warm, &CaptionCache::open(&cache_path).unwrap(), &coarse, &gallery, &template, 4).unwrap();
    ensure(cold.calls() == 30 && warm.calls() == 0 && run.cached == 30, || {
        format!("cold {} calls, warm {} calls", cold.calls(), warm.calls())
    })?;

    let mut peaks = Vec::new();
    for bound in [1, 2, 4, 8] {
        let p = CountingProvider::new(Duration::from_millis(3), []);
        caption_candidates(&p, &CaptionCache::in_memory(), &coarse, &gallery, &template, bound).unwrap();
        ensure(p.peak() <= bound, || format!("peak {} over bound {bound}", p.peak()))?;
        peaks.push(format!("{}/{bound}", p.peak()));
    }

    let server = ScriptedServer::start(vec![
        (503, "{}".into()),
        (503, "{}".into()),
        (200, serde_json::json!({ "caption": "a bridge over a canal" }).to_string()),
    ]);
    let cfg = ProviderConfig {
        provider_id: ProviderKind::Http,
        endpoint: Some(server.url.clone()),
        backoff_base_ms: 5,
        ..ProviderConfig::default()
    };
    let provider = HttpProvider::new(&cfg).unwrap();
    let caption = fetch_caption(&provider, &common::record("img_00", 0), &template).map_err(|e| e.to_string())?;
    let requests = server.request_count();
    server.join();
    ensure(provider.retries() == 2 && requests == 3 && caption.text == "a bridge over a canal", || {
        format!("{} retries over {requests} requests", provider.retries())
    })?;
    Ok(format!("warm rerun 0 calls; peak in flight {}; 503,503,200 -> 2 retries", peaks.join(" ")))
}

const ALPHABET: &[char] = &['a', 'Z', '7', ' ', '"', '\\', '/', '\n', '\t', '\u{1}', '\u{7f}', 'é', '北', '🛰', '\u{2028}'];

fn random_string(rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(0..24);
    (0..n).map(|_| ALPHABET[rng.random_range(0..ALPHABET.len())]).collect()
}

fn random_f64(rng: &mut ChaCha8Rng) -> f64 {
    match rng.random_range(0..4) {
        0 => rng.random_range(-1.0..1.0),
        1 => 0.1 * rng.random_range(-10i32..=10) as f64,
        _ => loop {
            let v = f64::from_bits(rng.random());
            if v.is_finite() {
                break v;
            }
        },
    }
}

fn random_f32(rng: &mut ChaCha8Rng) -> f32 {
    loop {
        let v = f32::from_bits(rng.random());
        if v.is_finite() {
            break v;
        }
    }
}

fn platform(rng: &mut ChaCha8Rng) -> Platform {
    [Platform::Drone, Platform::Satellite, Platform::Ground][rng.random_range(0..3)]
}

fn random_caption(rng: &mut ChaCha8Rng, image_id: String) -> Caption {
    Caption {
        image_id,
        text: random_string(rng),
        provider_id: random_string(rng),
        prompt_hash: format!("{:016x}", rng.random::<u64>()),
        model_id: random_string(rng),
        token_limit: rng.random(),
    }
}

/// write -> read -> write, comparing the two files byte for byte.
fn jsonl_roundtrip<T>(dir: &Path, name: &str, items: &[T]) -> Result<(), String>
where
    T: Serialize + DeserializeOwned + PartialEq + std::fmt::Debug,
{
    let first = dir.join(format!("{name}.a.jsonl"));
    let second = dir.join(format!("{name}.b.jsonl"));
    jsonl::write_jsonl(&first, items).map_err(|e| e.to_string())?;
    let back: Vec<T> = jsonl::read_jsonl(&first).map_err(|e| e.to_string())?;
    ensure(back == items, || format!("{name}: values changed on read"))?;
    jsonl::write_jsonl(&second, &back).map_err(|e| e.to_string())?;
    bytes_equal(&first, &second, name)
}

fn bytes_equal(a: &Path, b: &Path, name: &str) -> Result<(), String> {
    let (x, y) = (std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    ensure(x == y, || format!("{name}: rewritten file differs"))
}

fn format_roundtrips() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC9);
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for instance in 0..100 {
        let n = rng.random_range(1..12);
        let ids: Vec<String> = (0..n).map(|i| format!("{}#{i}", random_string(&mut rng))).collect();

        let rows = rng.random_range(1..6);
        let dim = rng.random_range(1..9);
        let data: Vec<f32> = (0..rows * dim)
            .map(|i| if i % dim == 0 { rng.random_range(0.5..2.0) } else { random_f32(&mut rng) })
            .collect();
        let m = Matrix::from_flat(dim, data).unwrap();
        let (a, b) = (d.join("e.a.cgem"), d.join("e.b.cgem"));
        write_embedding_file(&a, &m).map_err(|e| e.to_string())?;
        let back = read_embedding_file(&a).map_err(|e| e.to_string())?;
        ensure(back.as_flat().iter().zip(m.as_flat()).all(|(x, y)| x.to_bits() == y.to_bits()), || {
            format!("instance {instance}: embedding values changed")
        })?;
        write_embedding_file(&b, &back).map_err(|e| e.to_string())?;
        bytes_equal(&a, &b, "embeddings")?;

        let images: Vec<ImageRecord> = ids
            .iter()
            .enumerate()
            .map(|(row, id)| ImageRecord {
                image_id: id.clone(),
                platform: platform(&mut rng),
                uri: rng.random_bool(0.5).then(|| random_string(&mut rng)),
                row_index: row,
            })
            .collect();
        jsonl_roundtrip(d, "gallery", &images)?;

        let queries: Vec<QueryRecord> = (0..n)
            .map(|i| QueryRecord {
                query_id: format!("q{i}"),
                text: random_string(&mut rng),
                relevant_ids: ids.iter().filter(|_| rng.random_bool(0.3)).cloned().collect(),
                row_index: rng.random_range(0..1000),
            })
            .collect();
        jsonl_roundtrip(d, "queries", &queries)?;

        let captions: Vec<Caption> = ids.iter().map(|id| random_caption(&mut rng, id.clone())).collect();
        jsonl_roundtrip(d, "captions", &captions)?;

        let results: Vec<ResultRecord> = queries
            .iter()
            .map(|q| ResultRecord {
                query_id: q.query_id.clone(),
                ranking: ids
                    .iter()
                    .map(|id| ScoredId {
                        image_id: id.clone(),
                        score: random_f64(&mut rng),
                    })
                    .collect(),
            })
            .collect();
        jsonl_roundtrip(d, "results", &results)?;

        let breakdown: Vec<ScoreBreakdown> = ids
            .iter()
            .map(|id| ScoreBreakdown {
                query_id: "q".into(),
                image_id: id.clone(),
                s_coarse: random_f64(&mut rng),
                s_sem: random_f64(&mut rng),
                s_final: random_f64(&mut rng),
            })
            .collect();
        jsonl_roundtrip(d, "breakdown", &breakdown)?;

        let qrel_records: Vec<QrelRecord> = queries
            .iter()
            .map(|q| QrelRecord {
                query_id: q.query_id.clone(),
                relevant_ids: ids
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i == 0 || rng.random_bool(0.4))
                    .map(|(_, id)| id.clone())
                    .collect(),
            })
            .collect();
        let qrels = Qrels::from_records(&qrel_records).map_err(|e| e.to_string())?;
        let (a, b) = (d.join("qrels.a.jsonl"), d.join("qrels.b.jsonl"));
        qrels.write(&a).map_err(|e| e.to_string())?;
        let back = Qrels::read(&a).map_err(|e| e.to_string())?;
        ensure(back == qrels, || "qrels changed on read".into())?;
        back.write(&b).map_err(|e| e.to_string())?;
        bytes_equal(&a, &b, "qrels")?;

        let cache_path = d.join(format!("cache{instance}.jsonl"));
        {
            let cache = CaptionCache::open(&cache_path).map_err(|e| e.to_string())?;
            for c in &captions {
                cache.insert(c.clone()).map_err(|e| e.to_string())?;
            }
        }
        let reopened = CaptionCache::open(&cache_path).map_err(|e| e.to_string())?;
        ensure(captions.iter().all(|c| reopened.get(&CacheKey::of(c)).as_ref() == Some(c)), || {
            "cache entry changed on reopen".into()
        })?;
        let lines: Vec<Caption> = jsonl::read_jsonl(&cache_path).map_err(|e| e.to_string())?;
        let rewritten = d.join("cache.b.jsonl");
        jsonl::write_jsonl(&rewritten, &lines).map_err(|e| e.to_string())?;
        bytes_equal(&cache_path, &rewritten, "cache")?;

        let pairs: Vec<(String, String)> = ids.iter().map(|id| (id.clone(), random_string(&mut rng))).collect();
        let mapping = d.join("mapping.jsonl");
        FileProvider::write_mapping(&mapping, &pairs).map_err(|e| e.to_string())?;
        let lines: Vec<MappingLine> = jsonl::read_jsonl(&mapping).map_err(|e| e.to_string())?;
        jsonl_roundtrip(d, "mapping", &lines)?;
        bytes_equal(&mapping, &d.join("mapping.a.jsonl"), "mapping")?;

        let texts: Vec<&str> = pairs.iter().map(|p| p.1.as_str()).collect();
        let manifest = d.join("manifest.jsonl");
        FileEmbedder::write_manifest(&manifest, &texts).map_err(|e| e.to_string())?;
        let lines: Vec<DigestRow> = jsonl::read_jsonl(&manifest).map_err(|e| e.to_string())?;
        jsonl_roundtrip(d, "manifest", &lines)?;
        bytes_equal(&manifest, &d.join("manifest.a.jsonl"), "manifest")?;
    }
    Ok("100 instances x 10 formats byte-identical".into())
}

fn report(index: usize, name: &str, started: Instant, verdict: &Verdict) -> bool {
    let secs = started.elapsed().as_secs_f64();
    match verdict {
        Ok(detail) => println!("PASS criterion {index}: {name}: {detail} [{secs:.1}s]"),
        Err(why) => println!("FAIL criterion {index}: {name}: {why} [{secs:.1}s]"),
    }
    verdict.is_ok()
}

fn main() {
    let mut passed = Vec::new();

    let t = Instant::now();
    passed.push(report(1, "top-k oracle equivalence", t, &topk_oracle_equivalence()));
    let t = Instant::now();
    passed.push(report(2, "shard determinism", t, &shard_determinism()));
    let t = Instant::now();
    passed.push(report(3, "gradient fidelity", t, &gradient_fidelity()));

    let e = MockHashEmbedder::new(384).unwrap();
    let t = Instant::now();
    let small: Vec<_> = (0..10)
        .map(|seed| {
            let data = generate_synthetic(&small_spec(100 + seed)).unwrap();
            let run = run_synthetic_pipeline(&data, &e, 0.3, 20, &[1, 5, 10, 20]).unwrap();
            (data, run)
        })
        .collect();
    passed.push(report(4, "fusion endpoint reductions", t, &fusion_endpoints(&small)));

    let t6 = Instant::now();
    let full = generate_synthetic(&SynthSpec::default())
        .and_then(|data| run_synthetic_pipeline(&data, &e, 0.3, 20, &[1, 5, 10, 20]));
    let mut runs: Vec<&SynthRun> = small.iter().map(|(_, r)| r).collect();
    if let Ok(run) = &full {
        runs.push(run);
    }
    let t = Instant::now();
    passed.push(report(5, "recall ceiling", t, &recall_ceiling(&runs)));
    let verdict = match &full {
        Ok(run) => synthetic_improvement(run),
        Err(err) => Err(err.to_string()),
    };
    passed.push(report(6, "synthetic end-to-end improvement", t6, &verdict));

    let t = Instant::now();
    passed.push(report(7, "rerank latency", t, &rerank_latency()));
    let t = Instant::now();
    passed.push(report(8, "caption client idempotence and bounds", t, &caption_client()));
    let t = Instant::now();
    passed.push(report(9, "format round-trips", t, &format_roundtrips()));

    let failed: Vec<usize> = (1..=9).filter(|i| !passed[i - 1]).collect();
    if failed.is_empty() {
        println!("acceptance: 9/9 criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
