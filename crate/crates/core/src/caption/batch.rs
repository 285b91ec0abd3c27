use std::collections::HashSet;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::Serialize;

use super::{fetch_caption, CacheKey, CaptionCache, ProviderError, CaptionProvider, PromptTemplate};
use crate::datamodel::Caption;
use crate::error::{Error, Result};
use crate::retrieve::CoarseResult;
use crate::scalar::Scalar;
use crate::store::GalleryStore;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CaptionFailure {
    pub image_id: String,
    pub error: String,
}

/// Outcome of captioning every distinct candidate across a set of queries.
#[derive(Debug, Clone, Default)]
pub struct CaptionRun {
    /// One caption per successfully captioned image, in order of first
    /// appearance across the candidate lists.
    pub captions: Vec<Caption>,
    pub fetched: usize,
    pub cached: usize,
    pub failures: Vec<CaptionFailure>,
}

impl CaptionRun {
    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Captions every distinct candidate image. Cache hits skip the provider;
/// misses are fetched by at most `max_concurrency` workers and appended to
/// the cache as they complete, so an interrupted run keeps its progress.
pub fn caption_candidates<S: Scalar>(
    provider: &dyn CaptionProvider,
    cache: &CaptionCache,
    candidates: &[CoarseResult],
    gallery: &GalleryStore<S>,
    template: &PromptTemplate,
    max_concurrency: usize,
) -> Result<CaptionRun> {
    if max_concurrency == 0 {
        return Err(Error::invalid("max_concurrency must be >= 1"));
    }
    let mut seen = HashSet::new();
    let ids: Vec<&str> = candidates
        .iter()
        .flat_map(|c| c.candidates.ids())
        .filter(|id| seen.insert(*id))
        .collect();

    let mut slots: Vec<Option<Result<Caption, ProviderError>>> = vec![None; ids.len()];
    let mut pending = Vec::new();
    let mut cached = 0;
    for (i, id) in ids.iter().enumerate() {
        let key = CacheKey::new(id, template.hash(), provider.model_id());
        if let Some(hit) = cache.get(&key) {
            slots[i] = Some(Ok(hit));
            cached += 1;
        } else if gallery.record(id).is_none() {
            slots[i] = Some(Err(ProviderError::Unresolvable(id.to_string())));
        } else {
            pending.push(i);
        }
    }

    let next = AtomicUsize::new(0);
    let done = Mutex::new(Vec::with_capacity(pending.len()));
    let cache_error = Mutex::new(None);
    let workers = max_concurrency.min(pending.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let j = next.fetch_add(1, Ordering::Relaxed);
                let Some(&slot) = pending.get(j) else { break };
                let image = gallery.record(ids[slot]).expect("resolved above");
                let outcome = fetch_caption(provider, image, template);
                if let Ok(caption) = &outcome {
                    if let Err(e) = cache.insert(caption.clone()) {
                        cache_error.lock().expect("lock").get_or_insert(e);
                    }
                }
                done.lock().expect("lock").push((slot, outcome));
            });
        }
    });
    if let Some(e) = cache_error.into_inner().expect("lock") {
        return Err(e);
    }
    let fetched_results = done.into_inner().expect("lock");
    let mut fetched = 0;
    for (slot, outcome) in fetched_results {
        fetched += usize::from(outcome.is_ok());
        slots[slot] = Some(outcome);
    }

    let mut run = CaptionRun {
        fetched,
        cached,
        ..CaptionRun::default()
    };
    for (id, slot) in ids.iter().zip(slots) {
        match slot.expect("every slot filled") {
            Ok(c) => run.captions.push(c),
            Err(e) => run.failures.push(CaptionFailure {
                image_id: id.to_string(),
                error: e.to_string(),
            }),
        }
    }
    Ok(run)
}
