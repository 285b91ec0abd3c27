use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use crate::datamodel::{jsonl, Caption};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CacheKey {
    pub image_id: String,
    pub prompt_hash: String,
    pub model_id: String,
}

impl CacheKey {
    pub fn new(image_id: &str, prompt_hash: &str, model_id: &str) -> Self {
        Self {
            image_id: image_id.to_owned(),
            prompt_hash: prompt_hash.to_owned(),
            model_id: model_id.to_owned(),
        }
    }

    pub fn of(caption: &Caption) -> Self {
        Self::new(&caption.image_id, &caption.prompt_hash, &caption.model_id)
    }
}

/// Append-only caption cache. Reads go through a lock shared by many
/// readers; appends are serialized by a single writer lock.
#[derive(Debug)]
pub struct CaptionCache {
    path: Option<PathBuf>,
    entries: RwLock<HashMap<CacheKey, Caption>>,
    writer: Mutex<Option<File>>,
}

impl CaptionCache {
    pub fn in_memory() -> Self {
        Self {
            path: None,
            entries: RwLock::new(HashMap::new()),
            writer: Mutex::new(None),
        }
    }

    /// Loads `path` if it exists (later lines win) and opens it for append.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut entries = HashMap::new();
        if path.exists() {
            let file = File::open(path).map_err(|e| Error::io(path, e))?;
            let captions: Vec<Caption> = jsonl::parse_jsonl(path, BufReader::new(file))?;
            for c in captions {
                entries.insert(CacheKey::of(&c), c);
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(Self {
            path: Some(path.to_path_buf()),
            entries: RwLock::new(entries),
            writer: Mutex::new(Some(file)),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, key: &CacheKey) -> Option<Caption> {
        self.entries.read().expect("cache lock").get(key).cloned()
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn insert(&self, caption: Caption) -> Result<()> {
        let mut writer = self.writer.lock().expect("cache writer lock");
        if let Some(file) = writer.as_mut() {
            let mut line = serde_json::to_vec(&caption)?;
            line.push(b'\n');
            let path = self.path.as_deref().unwrap_or(Path::new("<cache>"));
            file.write_all(&line).map_err(|e| Error::io(path, e))?;
            file.flush().map_err(|e| Error::io(path, e))?;
        }
        self.entries
            .write()
            .expect("cache lock")
            .insert(CacheKey::of(&caption), caption);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn caption(id: &str, text: &str, model: &str) -> Caption {
        Caption {
            image_id: id.into(),
            text: text.into(),
            provider_id: "mock".into(),
            prompt_hash: "h".into(),
            model_id: model.into(),
            token_limit: 256,
        }
    }

    #[test]
    fn reload_last_entry_wins() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        {
            let cache = CaptionCache::open(&path).unwrap();
            cache.insert(caption("a", "first", "m")).unwrap();
            cache.insert(caption("a", "second", "m")).unwrap();
            cache.insert(caption("a", "other model", "m2")).unwrap();
        }
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 3);
        let cache = CaptionCache::open(&path).unwrap();
        assert_eq!(cache.len(), 2);
        assert_eq!(cache.get(&CacheKey::new("a", "h", "m")).unwrap().text, "second");
        assert_eq!(cache.get(&CacheKey::new("a", "h", "m2")).unwrap().text, "other model");
        assert!(cache.get(&CacheKey::new("a", "other", "m")).is_none());
    }

    #[test]
    fn hit_is_byte_identical() {
        let cache = CaptionCache::in_memory();
        let c = caption("x", "ünïcode \"quoted\"", "m");
        cache.insert(c.clone()).unwrap();
        assert_eq!(cache.get(&CacheKey::of(&c)), Some(c));
    }
}
