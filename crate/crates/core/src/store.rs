//! Immutable in-memory gallery: records, one contiguous row-major matrix,
//! an id index and precomputed row norms.

use std::collections::HashMap;

use crate::datamodel::{validate_gallery, ImageRecord, Matrix};
use crate::error::{Error, Result};
use crate::scalar::{self, Scalar};

#[derive(Debug, Clone)]
pub struct GalleryStore<S> {
    records: Vec<ImageRecord>,
    matrix: Matrix<S>,
    id_index: HashMap<String, usize>,
    norms: Vec<S>,
    /// `row_to_record[row]` is the manifest position of that row.
    row_to_record: Vec<usize>,
}

impl<S: Scalar> GalleryStore<S> {
    pub fn build(records: Vec<ImageRecord>, matrix: Matrix<S>) -> Result<Self> {
        let report = validate_gallery(&records, matrix.rows(), matrix.dim());
        if !report.is_ok() {
            return Err(Error::Validation(report));
        }
        matrix.check_rows()?;
        let norms: Vec<S> = matrix.iter_rows().map(scalar::norm).collect();
        let mut row_to_record = vec![0; records.len()];
        let mut id_index = HashMap::with_capacity(records.len());
        for (i, rec) in records.iter().enumerate() {
            row_to_record[rec.row_index] = i;
            id_index.insert(rec.image_id.clone(), rec.row_index);
        }
        Ok(Self {
            records,
            matrix,
            id_index,
            norms,
            row_to_record,
        })
    }

    pub fn len(&self) -> usize {
        self.matrix.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    /// Records in manifest order.
    pub fn records(&self) -> &[ImageRecord] {
        &self.records
    }

    pub fn row_of(&self, image_id: &str) -> Option<usize> {
        self.id_index.get(image_id).copied()
    }

    pub fn record(&self, image_id: &str) -> Option<&ImageRecord> {
        self.row_of(image_id).map(|r| self.record_at_row(r))
    }

    pub fn record_at_row(&self, row: usize) -> &ImageRecord {
        &self.records[self.row_to_record[row]]
    }

    pub fn id_at_row(&self, row: usize) -> &str {
        &self.record_at_row(row).image_id
    }

    pub fn row(&self, row: usize) -> &[S] {
        self.matrix.row(row)
    }

    pub fn norms(&self) -> &[S] {
        &self.norms
    }

    pub fn matrix(&self) -> &Matrix<S> {
        &self.matrix
    }

    /// Splits the rows into `n_shards` contiguous ranges whose sizes differ
    /// by at most one. Surplus shards are empty.
    pub fn shard(&self, n_shards: usize) -> Result<Vec<ShardView<'_, S>>> {
        if n_shards == 0 {
            return Err(Error::invalid("n_shards must be >= 1"));
        }
        let n = self.len();
        let (base, extra) = (n / n_shards, n % n_shards);
        let mut lo = 0;
        Ok((0..n_shards)
            .map(|i| {
                let hi = lo + base + usize::from(i < extra);
                let view = ShardView { store: self, lo, hi };
                lo = hi;
                view
            })
            .collect())
    }
}

/// Contiguous row range `[lo, hi)` of a store.
#[derive(Debug, Clone, Copy)]
pub struct ShardView<'a, S> {
    pub store: &'a GalleryStore<S>,
    pub lo: usize,
    pub hi: usize,
}

impl<S> ShardView<'_, S> {
    pub fn len(&self) -> usize {
        self.hi - self.lo
    }

    pub fn is_empty(&self) -> bool {
        self.hi == self.lo
    }

    pub fn rows(&self) -> std::ops::Range<usize> {
        self.lo..self.hi
    }
}
