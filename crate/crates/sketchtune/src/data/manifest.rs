//! Line-delimited manifest: one header line, then one JSON record per line.
//!
//! The header carries the schema version and the author's per-polarity
//! counts; loading always recomputes counts from the records and keeps the
//! declared header values around for validation. Serialization is canonical
//! (fixed field order, no extra whitespace), so `write(load(p))` is
//! byte-identical for canonically written files.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Counts, DataError, SketchRecord};

pub const SCHEMA_VERSION: u32 = 1;

/// First line of a manifest file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub schema_version: u32,
    pub counts: Counts,
}

/// A loaded corpus: records plus recomputed counts.
#[derive(Debug, Clone)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub records: Vec<SketchRecord>,
    /// Recomputed from `records`.
    pub counts: Counts,
    /// Counts as declared by the file header, when loaded from disk.
    pub declared_counts: Option<Counts>,
    /// Directory image paths are resolved against.
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn new(records: Vec<SketchRecord>) -> Self {
        let counts = Counts::of(&records);
        Self {
            schema_version: SCHEMA_VERSION,
            records,
            counts,
            declared_counts: None,
            base_dir: PathBuf::from("."),
        }
    }

    pub fn with_base_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.base_dir = dir.into();
        self
    }

    /// Absolute or base-relative path of a record's image.
    pub fn resolve_image(&self, record: &SketchRecord) -> PathBuf {
        let p = Path::new(&record.image_path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records with `Provenance::Original`.
    pub fn originals(&self) -> impl Iterator<Item = &SketchRecord> {
        self.records.iter().filter(|r| r.provenance.is_original())
    }
}

/// Parses manifest text. Does not touch the filesystem.
pub fn parse_manifest_str(text: &str) -> Result<(Option<ManifestHeader>, Vec<SketchRecord>), DataError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let header = match lines.next() {
        None => return Ok((None, Vec::new())),
        Some((line, l)) => {
            serde_json::from_str::<ManifestHeader>(l).map_err(|e| DataError::MalformedRecord {
                line: line + 1,
                message: format!("header: {e}"),
            })?
        }
    };
    let mut records = Vec::new();
    for (line, l) in lines {
        let rec: SketchRecord =
            serde_json::from_str(l).map_err(|e| DataError::MalformedRecord {
                line: line + 1,
                message: e.to_string(),
            })?;
        records.push(rec);
    }
    Ok((Some(header), records))
}

/// Loads a manifest file, recomputes counts, and checks that every image
/// path resolves. Missing images are collected and reported in one batch.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest, DataError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let (header, records) = parse_manifest_str(&text)?;
    let base_dir = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));

    let manifest = DatasetManifest {
        schema_version: header
            .as_ref()
            .map(|h| h.schema_version)
            .unwrap_or(SCHEMA_VERSION),
        counts: Counts::of(&records),
        declared_counts: header.map(|h| h.counts),
        records,
        base_dir,
    };

    let missing: Vec<String> = manifest
        .records
        .iter()
        .filter(|r| !manifest.resolve_image(r).is_file())
        .map(|r| r.id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(DataError::MissingImages { ids: missing });
    }
    Ok(manifest)
}

/// Canonical serialization of a manifest.
pub fn manifest_to_string(m: &DatasetManifest) -> String {
    let header = ManifestHeader {
        schema_version: m.schema_version,
        counts: Counts::of(&m.records),
    };
    let mut out = String::new();
    out.push_str(&serde_json::to_string(&header).expect("header serializes"));
    out.push('\n');
    for rec in &m.records {
        out.push_str(&serde_json::to_string(rec).expect("record serializes"));
        out.push('\n');
    }
    out
}

/// Writes the canonical form to `path`.
pub fn write_manifest(m: &DatasetManifest, path: impl AsRef<Path>) -> Result<(), DataError> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    f.write_all(manifest_to_string(m).as_bytes())
        .map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })
}
