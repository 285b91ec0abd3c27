#![allow(dead_code)]

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use cgrs_core::caption::{CaptionProvider, MockProvider, ProviderError};
use cgrs_core::datamodel::{ImageRecord, Matrix, Platform, RankedList};
use cgrs_core::retrieve::CoarseResult;
use cgrs_core::store::GalleryStore;
use cgrs_core::Scalar;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn record(id: &str, row: usize) -> ImageRecord {
    ImageRecord {
        image_id: id.into(),
        platform: if row.is_multiple_of(3) { Platform::Satellite } else { Platform::Drone },
        uri: Some(format!("file:///images/{id}.jpg")),
        row_index: row,
    }
}

/// Random gallery with shuffled ids (so id order differs from row order) and
/// a fraction of exact duplicate rows to exercise the tie-break.
pub fn random_gallery<S: Scalar>(rng: &mut ChaCha8Rng, n: usize, dim: usize, dup_frac: f64) -> GalleryStore<S> {
    let mut rows: Vec<Vec<S>> = Vec::with_capacity(n);
    for i in 0..n {
        if i > 0 && rng.random_bool(dup_frac) {
            let j = rng.random_range(0..i);
            rows.push(rows[j].clone());
        } else {
            rows.push(random_vector(rng, dim));
        }
    }
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(rng);
    let records = ids.iter().enumerate().map(|(row, id)| record(&format!("img_{id:06}"), row)).collect();
    GalleryStore::build(records, Matrix::from_rows(&rows).unwrap()).unwrap()
}

pub fn random_vector<S: Scalar>(rng: &mut ChaCha8Rng, dim: usize) -> Vec<S> {
    loop {
        let v: Vec<S> = (0..dim).map(|_| S::of(rng.random_range(-1.0..1.0))).collect();
        if v.iter().any(|x| *x != S::zero()) {
            return v;
        }
    }
}

/// Full-sort reference: score every row with a plain loop and sort the lot.
pub fn oracle_topk<S: Scalar>(store: &GalleryStore<S>, query: &[S], k: usize) -> Vec<(String, f64)> {
    let mut qq = S::zero();
    for &x in query {
        qq += x * x;
    }
    let qn = qq.sqrt();
    let mut scored: Vec<(String, S)> = (0..store.len())
        .map(|row| {
            let g = store.row(row);
            let (mut d, mut gg) = (S::zero(), S::zero());
            for i in 0..g.len() {
                d += query[i] * g[i];
            }
            for &x in g {
                gg += x * x;
            }
            let mut c = d / (qn * gg.sqrt());
            let slack = S::of(1e-6);
            if c > S::one() && c - S::one() <= slack {
                c = S::one();
            }
            if c < -S::one() && -S::one() - c <= slack {
                c = -S::one();
            }
            (store.id_at_row(row).to_owned(), c)
        })
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    scored.truncate(k);
    scored.into_iter().map(|(id, s)| (id, s.as_f64())).collect()
}

pub fn as_pairs(list: &RankedList) -> Vec<(String, f64)> {
    list.iter().map(|c| (c.image_id.clone(), c.score)).collect()
}

pub fn gallery_of(ids: &[String]) -> GalleryStore<f32> {
    let records = ids.iter().enumerate().map(|(i, id)| record(id, i)).collect();
    let rows: Vec<Vec<f32>> = (0..ids.len()).map(|i| vec![1.0, i as f32]).collect();
    GalleryStore::build(records, Matrix::from_rows(&rows).unwrap()).unwrap()
}

pub fn coarse_of(qid: &str, ids: &[String]) -> CoarseResult {
    CoarseResult {
        query_id: qid.into(),
        candidates: RankedList::from_ordered(ids.iter().enumerate().map(|(i, id)| (id.clone(), 1.0 - i as f64 * 0.01)))
            .unwrap(),
    }
}

/// Mock provider that counts calls, tracks peak in-flight calls, and can be
/// told to fail for some images.
pub struct CountingProvider {
    inner: MockProvider,
    pub calls: AtomicUsize,
    in_flight: AtomicUsize,
    pub peak: AtomicUsize,
    delay: Duration,
    fail: HashSet<String>,
}

impl CountingProvider {
    pub fn new(delay: Duration, fail: impl IntoIterator<Item = String>) -> Self {
        Self {
            inner: MockProvider::new("mock-vlm", 256),
            calls: AtomicUsize::new(0),
            in_flight: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
            delay,
            fail: fail.into_iter().collect(),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn peak(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }
}

impl CaptionProvider for CountingProvider {
    fn provider_id(&self) -> &str {
        "counting"
    }

    fn model_id(&self) -> &str {
        self.inner.model_id()
    }

    fn token_limit(&self) -> u32 {
        self.inner.token_limit()
    }

    fn describe(&self, image: &ImageRecord, prompt: &str) -> Result<String, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        std::thread::sleep(self.delay);
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        if self.fail.contains(&image.image_id) {
            return Err(ProviderError::Rejected(format!("scripted failure for {}", image.image_id)));
        }
        self.inner.describe(image, prompt)
    }
}

/// One-request-per-connection HTTP server answering from a fixed script.
/// Each request body is recorded.
pub struct ScriptedServer {
    pub url: String,
    pub requests: Arc<Mutex<Vec<String>>>,
    handle: Option<JoinHandle<()>>,
}

impl ScriptedServer {
    pub fn start(script: Vec<(u16, String)>) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/caption", listener.local_addr().unwrap());
        let requests = Arc::new(Mutex::new(Vec::new()));
        let log = Arc::clone(&requests);
        let handle = std::thread::spawn(move || {
            for (status, body) in script {
                let Ok((stream, _)) = listener.accept() else { return };
                let mut reader = BufReader::new(stream);
                let mut length = 0usize;
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                        break;
                    }
                    let lower = line.to_ascii_lowercase();
                    if let Some(v) = lower.strip_prefix("content-length:") {
                        length = v.trim().parse().unwrap_or(0);
                    }
                }
                let mut payload = vec![0u8; length];
                let _ = reader.read_exact(&mut payload);
                log.lock().unwrap().push(String::from_utf8_lossy(&payload).into_owned());
                let reason = if status == 200 { "OK" } else { "Service Unavailable" };
                let response = format!(
                    "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
                let mut stream = reader.into_inner();
                let _ = stream.write_all(response.as_bytes());
                let _ = stream.flush();
            }
        });
        Self {
            url,
            requests,
            handle: Some(handle),
        }
    }

    pub fn request_count(&self) -> usize {
        self.requests.lock().unwrap().len()
    }

    pub fn join(mut self) {
        if let Some(h) = self.handle.take() {
            h.join().unwrap();
        }
    }
}
