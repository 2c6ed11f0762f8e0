//! Corpus data model: records, the line-delimited manifest format,
//! validation, and deterministic stratified splitting.

mod manifest;
mod record;
mod split;
pub mod synth;
pub mod taxonomy;
mod validate;

pub use manifest::{
    load_manifest, parse_manifest_str, write_manifest, DatasetManifest, ManifestHeader,
    SCHEMA_VERSION,
};
pub use record::{Polarity, Provenance, QaKind, QaPair, SketchRecord};
pub use split::split_dataset;
pub use validate::{validate_dataset, Finding, QaCounts, ValidationOptions, ValidationReport};

use serde::{Deserialize, Serialize};

/// Per-polarity record totals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub positive: usize,
    pub negative: usize,
}

impl Counts {
    pub fn total(&self) -> usize {
        self.positive + self.negative
    }

    pub fn of(records: &[SketchRecord]) -> Self {
        let positive = records
            .iter()
            .filter(|r| r.polarity == Polarity::Positive)
            .count();
        Self {
            positive,
            negative: records.len() - positive,
        }
    }
}

/// Errors from loading, validating, or splitting a corpus.
#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed record at line {line}: {message}")]
    MalformedRecord { line: usize, message: String },
    #[error("{} image path(s) unresolvable, first: {}", ids.len(), ids.first().map(String::as_str).unwrap_or(""))]
    MissingImages { ids: Vec<String> },
    #[error("train fraction must be in (0, 1), got {0}")]
    InvalidFraction(f64),
    #[error("class {class} has {originals} original(s); at least 2 required to split")]
    InsufficientData { class: String, originals: usize },
    #[error("augmented record {id} references missing parent {parent}")]
    OrphanAugmented { id: String, parent: String },
}
