use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datamodel::{jsonl, QueryRecord};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::store::GalleryStore;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QrelRecord {
    pub query_id: String,
    pub relevant_ids: Vec<String>,
}

/// Ground truth: each query maps to the set of images that count as a hit.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Qrels(BTreeMap<String, BTreeSet<String>>);

impl Qrels {
    pub fn from_records(records: &[QrelRecord]) -> Result<Self> {
        let mut map = BTreeMap::new();
        for r in records {
            if r.relevant_ids.is_empty() {
                return Err(Error::invalid(format!("query {} has no relevant ids", r.query_id)));
            }
            let set: BTreeSet<String> = r.relevant_ids.iter().cloned().collect();
            if map.insert(r.query_id.clone(), set).is_some() {
                return Err(Error::invalid(format!("duplicate qrels entry for {}", r.query_id)));
            }
        }
        Ok(Self(map))
    }

    pub fn from_queries(queries: &[QueryRecord]) -> Result<Self> {
        let records: Vec<QrelRecord> = queries
            .iter()
            .map(|q| QrelRecord {
                query_id: q.query_id.clone(),
                relevant_ids: q.relevant_ids.clone(),
            })
            .collect();
        Self::from_records(&records)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_records(&jsonl::read_jsonl(path)?)
    }

    pub fn to_records(&self) -> Vec<QrelRecord> {
        self.0
            .iter()
            .map(|(q, ids)| QrelRecord {
                query_id: q.clone(),
                relevant_ids: ids.iter().cloned().collect(),
            })
            .collect()
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        jsonl::write_jsonl(path, &self.to_records())
    }

    pub fn relevant(&self, query_id: &str) -> Option<&BTreeSet<String>> {
        self.0.get(query_id)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Ids referenced by qrels but absent from `gallery`.
    pub fn unknown_ids<S: Scalar>(&self, gallery: &GalleryStore<S>) -> Vec<String> {
        self.0
            .values()
            .flatten()
            .filter(|id| gallery.row_of(id).is_none())
            .cloned()
            .collect()
    }
}
