//! Manifest validation: taxonomy membership, QA well-formedness, duplicate
//! ids, augmentation-family completeness, count identities, and (optionally)
//! image decoding checks.

use std::collections::{BTreeMap, HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{taxonomy, Counts, DatasetManifest, Polarity, SketchRecord};

/// One validation finding. An empty findings list means the manifest is valid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Finding {
    /// Record the finding is about, when it is record-scoped.
    pub record_id: Option<String>,
    /// Stable machine-readable code, e.g. `class-category-mismatch`.
    pub code: String,
    pub message: String,
}

impl Finding {
    fn record(id: &str, code: &str, message: impl Into<String>) -> Self {
        Self {
            record_id: Some(id.to_string()),
            code: code.to_string(),
            message: message.into(),
        }
    }

    fn global(code: &str, message: impl Into<String>) -> Self {
        Self {
            record_id: None,
            code: code.to_string(),
            message: message.into(),
        }
    }
}

/// QA-pair totals per polarity.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaCounts {
    pub positive: usize,
    pub negative: usize,
}

impl QaCounts {
    pub fn total(&self) -> usize {
        self.positive + self.negative
    }
}

#[derive(Debug, Clone)]
pub struct ValidationOptions {
    /// Decode every image and check raster shape. Slower; on by default.
    pub check_images: bool,
    /// Expected square side in pixels (64 toy, 512 real). `None` skips the
    /// size check but still requires squareness.
    pub expected_size: Option<u32>,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self {
            check_images: true,
            expected_size: None,
        }
    }
}

/// Validation output: findings plus recomputed aggregates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
    pub counts: Counts,
    pub qa_counts: QaCounts,
    pub originals: Counts,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.findings.is_empty()
    }
}

/// Children expected per positive original under the full augmentation menu.
pub const POSITIVE_FAMILY_CHILDREN: usize = 7;
/// Children expected per negative original (line thickening is omitted).
pub const NEGATIVE_FAMILY_CHILDREN: usize = 6;

/// Validates a manifest. Findings are reported, never thrown; an empty
/// findings list means valid.
pub fn validate_dataset(m: &DatasetManifest, opts: &ValidationOptions) -> ValidationReport {
    let mut findings = Vec::new();

    // Duplicate ids.
    let mut seen = HashSet::new();
    for rec in &m.records {
        if !seen.insert(rec.id.as_str()) {
            findings.push(Finding::record(&rec.id, "duplicate-id", "id appears more than once"));
        }
    }

    // Per-record structural checks.
    for rec in &m.records {
        match taxonomy::category_of(&rec.class_name) {
            None => findings.push(Finding::record(
                &rec.id,
                "unknown-class",
                format!("class {:?} is not in the class table", rec.class_name),
            )),
            Some(cat) => {
                if !cat.eq_ignore_ascii_case(rec.category.trim()) {
                    findings.push(Finding::record(
                        &rec.id,
                        "class-category-mismatch",
                        format!(
                            "class {:?} belongs to {:?}, record says {:?}",
                            rec.class_name, cat, rec.category
                        ),
                    ));
                }
            }
        }
        if rec.qa_pairs.is_empty() {
            findings.push(Finding::record(&rec.id, "empty-qa-set", "record has no QA pairs"));
        }
        for (i, qa) in rec.qa_pairs.iter().enumerate() {
            if !qa.is_well_formed() {
                findings.push(Finding::record(
                    &rec.id,
                    "blank-qa-pair",
                    format!("QA pair {i} has an empty question or answer"),
                ));
            }
        }
        if rec.caption.trim().is_empty() {
            findings.push(Finding::record(&rec.id, "empty-caption", "caption is empty"));
        }
    }

    // Declared header counts must match recomputed counts.
    let counts = Counts::of(&m.records);
    if let Some(declared) = m.declared_counts {
        if declared != counts {
            findings.push(Finding::global(
                "count-mismatch",
                format!("header declares {declared:?}, records give {counts:?}"),
            ));
        }
    }

    // Augmentation-family completeness. Only enforced once augmentation has
    // started (any augmented record present); a raw corpus of originals is
    // valid on its own.
    let by_id: HashMap<&str, &SketchRecord> =
        m.records.iter().map(|r| (r.id.as_str(), r)).collect();
    let mut children: BTreeMap<&str, Vec<&SketchRecord>> = BTreeMap::new();
    let mut any_augmented = false;
    for rec in &m.records {
        if let Some(parent) = rec.provenance.parent() {
            any_augmented = true;
            match by_id.get(parent) {
                None => findings.push(Finding::record(
                    &rec.id,
                    "orphan-augmented",
                    format!("parent {parent:?} not in manifest"),
                )),
                Some(p) => {
                    if !p.provenance.is_original() {
                        findings.push(Finding::record(
                            &rec.id,
                            "nested-augmentation",
                            format!("parent {parent:?} is itself augmented"),
                        ));
                    }
                    if p.polarity != rec.polarity || p.class_name != rec.class_name {
                        findings.push(Finding::record(
                            &rec.id,
                            "family-metadata-drift",
                            "child polarity/class differs from parent",
                        ));
                    }
                    children.entry(parent).or_default().push(rec);
                }
            }
        }
    }
    if any_augmented {
        for rec in m.originals() {
            let expected = match rec.polarity {
                Polarity::Positive => POSITIVE_FAMILY_CHILDREN,
                Polarity::Negative => NEGATIVE_FAMILY_CHILDREN,
            };
            let got = children.get(rec.id.as_str()).map(Vec::len).unwrap_or(0);
            if got != expected {
                findings.push(Finding::record(
                    &rec.id,
                    "incomplete-family",
                    format!("expected {expected} augmented children, found {got}"),
                ));
            } else {
                let tags: HashSet<&str> = children[rec.id.as_str()]
                    .iter()
                    .filter_map(|c| match &c.provenance {
                        super::Provenance::Augmented { tag, .. } => Some(tag.as_str()),
                        _ => None,
                    })
                    .collect();
                if tags.len() != expected {
                    findings.push(Finding::record(
                        &rec.id,
                        "duplicate-augmentation-tag",
                        "children of one parent share a provenance tag",
                    ));
                }
            }
        }
    }

    // Image checks, fanned out per record and merged in stable id order.
    if opts.check_images {
        let mut image_findings: Vec<(String, Finding)> = m
            .records
            .par_iter()
            .flat_map_iter(|rec| check_image(m, rec, opts).into_iter().map(|f| (rec.id.clone(), f)))
            .collect();
        image_findings.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.code.cmp(&b.1.code)));
        findings.extend(image_findings.into_iter().map(|(_, f)| f));
    }

    let qa_counts = m.records.iter().fold(QaCounts::default(), |mut acc, r| {
        match r.polarity {
            Polarity::Positive => acc.positive += r.qa_pairs.len(),
            Polarity::Negative => acc.negative += r.qa_pairs.len(),
        }
        acc
    });

    let origs: Vec<&SketchRecord> = m.originals().collect();
    let originals = Counts {
        positive: origs.iter().filter(|r| r.polarity == Polarity::Positive).count(),
        negative: origs.iter().filter(|r| r.polarity == Polarity::Negative).count(),
    };

    ValidationReport {
        findings,
        counts,
        qa_counts,
        originals,
    }
}

fn check_image(m: &DatasetManifest, rec: &SketchRecord, opts: &ValidationOptions) -> Vec<Finding> {
    let mut out = Vec::new();
    let path = m.resolve_image(rec);
    if path.extension().and_then(|e| e.to_str()).map(|e| !e.eq_ignore_ascii_case("png")).unwrap_or(true) {
        out.push(Finding::record(&rec.id, "non-png-image", format!("{}", path.display())));
        return out;
    }
    match image::open(&path) {
        Err(e) => out.push(Finding::record(
            &rec.id,
            "undecodable-image",
            format!("{}: {e}", path.display()),
        )),
        Ok(img) => {
            let (w, h) = (img.width(), img.height());
            if w != h {
                out.push(Finding::record(
                    &rec.id,
                    "non-square-image",
                    format!("{w}x{h}"),
                ));
            }
            if let Some(size) = opts.expected_size {
                if w != size || h != size {
                    out.push(Finding::record(
                        &rec.id,
                        "non-canonical-size",
                        format!("expected {size}x{size}, got {w}x{h}"),
                    ));
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::super::{Provenance, QaKind, QaPair};
    use super::*;

    fn rec(id: &str, class: &str, category: &str, polarity: Polarity) -> SketchRecord {
        SketchRecord {
            id: id.into(),
            image_path: format!("{id}.png"),
            class_name: class.into(),
            category: category.into(),
            polarity,
            caption: "A drawing.".into(),
            qa_pairs: vec![
                QaPair::new("What is it?", class, QaKind::Instance),
                QaPair::new("Is the background white?", "Yes", QaKind::Sketch),
            ],
            provenance: Provenance::Original,
        }
    }

    fn no_images() -> ValidationOptions {
        ValidationOptions {
            check_images: false,
            expected_size: None,
        }
    }

    #[test]
    fn wrong_category_is_a_finding() {
        let m = DatasetManifest::new(vec![rec("fish_1", "fish", "Household Items", Polarity::Positive)]);
        let report = validate_dataset(&m, &no_images());
        assert!(report
            .findings
            .iter()
            .any(|f| f.code == "class-category-mismatch"));
    }

    #[test]
    fn empty_qa_set_is_a_finding() {
        let mut r = rec("sun_1", "Sun", "Nature & Environment", Polarity::Positive);
        r.qa_pairs.clear();
        let m = DatasetManifest::new(vec![r]);
        let report = validate_dataset(&m, &no_images());
        assert!(report.findings.iter().any(|f| f.code == "empty-qa-set"));
    }

    #[test]
    fn duplicate_ids_are_findings() {
        let m = DatasetManifest::new(vec![
            rec("dog_1", "Dog", "Animals", Polarity::Positive),
            rec("dog_1", "Dog", "Animals", Polarity::Positive),
        ]);
        let report = validate_dataset(&m, &no_images());
        assert!(report.findings.iter().any(|f| f.code == "duplicate-id"));
    }

    #[test]
    fn family_completeness_only_checked_once_augmentation_started() {
        // Raw originals: valid.
        let originals = vec![rec("cat_1", "Cat", "Animals", Polarity::Positive)];
        let m = DatasetManifest::new(originals.clone());
        assert!(validate_dataset(&m, &no_images()).is_valid());

        // One child present: family incomplete.
        let mut with_child = originals;
        let mut child = rec("cat_1__rotate+15", "Cat", "Animals", Polarity::Positive);
        child.provenance = Provenance::Augmented {
            parent: "cat_1".into(),
            tag: "rotate+15".into(),
        };
        with_child.push(child);
        let m = DatasetManifest::new(with_child);
        let report = validate_dataset(&m, &no_images());
        assert!(report.findings.iter().any(|f| f.code == "incomplete-family"));
    }

    #[test]
    fn qa_counts_accumulate_per_polarity() {
        let m = DatasetManifest::new(vec![
            rec("dog_1", "Dog", "Animals", Polarity::Positive),
            rec("mug_1", "Mug", "Household Items", Polarity::Negative),
        ]);
        let report = validate_dataset(&m, &no_images());
        assert_eq!(report.qa_counts, QaCounts { positive: 2, negative: 2 });
        assert_eq!(report.qa_counts.total(), 4);
    }
}
