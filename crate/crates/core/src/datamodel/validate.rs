use std::collections::HashMap;
use std::fmt;

use serde::Serialize;

use super::{ImageRecord, QueryRecord};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    DuplicateId { id: String, first: usize, second: usize },
    DuplicateRow { row_index: usize, first: usize, second: usize },
    RowOutOfRange { record: usize, row_index: usize, rows: usize },
    CountMismatch { records: usize, rows: usize },
    EmptyId { record: usize },
    EmptyText { record: usize },
    NoRelevantIds { record: usize },
    ZeroDim,
    DimMismatch { expected: usize, found: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateId { id, first, second } => {
                write!(f, "duplicate id {id:?} at records {first} and {second}")
            }
            Violation::DuplicateRow {
                row_index,
                first,
                second,
            } => write!(f, "row_index {row_index} used by records {first} and {second}"),
            Violation::RowOutOfRange {
                record,
                row_index,
                rows,
            } => write!(f, "record {record}: row_index {row_index} out of range for {rows} rows"),
            Violation::CountMismatch { records, rows } => {
                write!(f, "{records} records but matrix has {rows} rows")
            }
            Violation::EmptyId { record } => write!(f, "record {record}: empty id"),
            Violation::EmptyText { record } => write!(f, "record {record}: empty text"),
            Violation::NoRelevantIds { record } => write!(f, "record {record}: no relevant ids"),
            Violation::ZeroDim => write!(f, "matrix dim is zero"),
            Violation::DimMismatch { expected, found } => {
                write!(f, "dim mismatch: expected {expected}, found {found}")
            }
        }
    }
}

/// Every invariant violation found in a manifest; empty means valid.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Checks gallery records against the embedding matrix shape. Never fails;
/// every problem is collected in the report.
pub fn validate_gallery(records: &[ImageRecord], matrix_rows: usize, matrix_dim: usize) -> ValidationReport {
    let mut violations = Vec::new();
    if matrix_dim == 0 {
        violations.push(Violation::ZeroDim);
    }
    if records.len() != matrix_rows {
        violations.push(Violation::CountMismatch {
            records: records.len(),
            rows: matrix_rows,
        });
    }
    let mut ids: HashMap<&str, usize> = HashMap::with_capacity(records.len());
    let mut rows: HashMap<usize, usize> = HashMap::with_capacity(records.len());
    for (i, rec) in records.iter().enumerate() {
        if rec.image_id.is_empty() {
            violations.push(Violation::EmptyId { record: i });
        } else if let Some(&first) = ids.get(rec.image_id.as_str()) {
            violations.push(Violation::DuplicateId {
                id: rec.image_id.clone(),
                first,
                second: i,
            });
        } else {
            ids.insert(&rec.image_id, i);
        }
        if rec.row_index >= matrix_rows {
            violations.push(Violation::RowOutOfRange {
                record: i,
                row_index: rec.row_index,
                rows: matrix_rows,
            });
        } else if let Some(&first) = rows.get(&rec.row_index) {
            violations.push(Violation::DuplicateRow {
                row_index: rec.row_index,
                first,
                second: i,
            });
        } else {
            rows.insert(rec.row_index, i);
        }
    }
    ValidationReport { violations }
}

pub fn validate_queries(records: &[QueryRecord], matrix_rows: usize) -> ValidationReport {
    let mut violations = Vec::new();
    let mut ids: HashMap<&str, usize> = HashMap::with_capacity(records.len());
    for (i, rec) in records.iter().enumerate() {
        if rec.query_id.is_empty() {
            violations.push(Violation::EmptyId { record: i });
        } else if let Some(&first) = ids.get(rec.query_id.as_str()) {
            violations.push(Violation::DuplicateId {
                id: rec.query_id.clone(),
                first,
                second: i,
            });
        } else {
            ids.insert(&rec.query_id, i);
        }
        if rec.text.trim().is_empty() {
            violations.push(Violation::EmptyText { record: i });
        }
        if rec.relevant_ids.is_empty() {
            violations.push(Violation::NoRelevantIds { record: i });
        }
        if rec.row_index >= matrix_rows {
            violations.push(Violation::RowOutOfRange {
                record: i,
                row_index: rec.row_index,
                rows: matrix_rows,
            });
        }
    }
    ValidationReport { violations }
}
