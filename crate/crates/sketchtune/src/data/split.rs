//! Deterministic stratified train/test splitting.
//!
//! The split operates on originals only, stratified per class; every
//! augmented record follows its parent so no source drawing leaks across
//! the partition through its augmentations.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::seq::SliceRandom;

use super::{DataError, DatasetManifest};
use crate::nn::derive_seed;

/// Splits a manifest into (train, test).
///
/// Deterministic for a fixed seed: per class, original ids are sorted,
/// shuffled with a class-derived stream, and the first `round(n * fraction)`
/// go to train (clamped so both sides stay non-empty).
pub fn split_dataset(
    m: &DatasetManifest,
    train_fraction: f64,
    seed: u64,
) -> Result<(DatasetManifest, DatasetManifest), DataError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DataError::InvalidFraction(train_fraction));
    }

    let ids: HashSet<&str> = m.records.iter().map(|r| r.id.as_str()).collect();
    for rec in &m.records {
        if let Some(parent) = rec.provenance.parent() {
            if !ids.contains(parent) {
                return Err(DataError::OrphanAugmented {
                    id: rec.id.clone(),
                    parent: parent.to_string(),
                });
            }
        }
    }

    let mut by_class: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for rec in m.originals() {
        by_class.entry(rec.class_name.as_str()).or_default().push(rec.id.as_str());
    }
    for (class, ids) in &by_class {
        if ids.len() < 2 {
            return Err(DataError::InsufficientData {
                class: class.to_string(),
                originals: ids.len(),
            });
        }
    }

    let mut train_ids: HashSet<&str> = HashSet::new();
    for (class, ids) in &mut by_class {
        ids.sort_unstable();
        let mut rng = crate::nn::seeded_rng(derive_seed(seed, "split"), class);
        ids.shuffle(&mut rng);
        let n = ids.len();
        let take = (((n as f64) * train_fraction).round() as usize).clamp(1, n - 1);
        train_ids.extend(ids.iter().take(take));
    }

    // Children inherit the parent's partition.
    let parent_of: HashMap<&str, &str> = m
        .records
        .iter()
        .filter_map(|r| r.provenance.parent().map(|p| (r.id.as_str(), p)))
        .collect();
    let in_train = |id: &str| -> bool {
        let root = parent_of.get(id).copied().unwrap_or(id);
        train_ids.contains(root)
    };

    let mut train = Vec::new();
    let mut test = Vec::new();
    for rec in &m.records {
        if in_train(&rec.id) {
            train.push(rec.clone());
        } else {
            test.push(rec.clone());
        }
    }

    let mk = |records| {
        let mut out = DatasetManifest::new(records);
        out.schema_version = m.schema_version;
        out.base_dir = m.base_dir.clone();
        out
    };
    Ok((mk(train), mk(test)))
}

#[cfg(test)]
mod tests {
    use super::super::{Polarity, Provenance, QaKind, QaPair, SketchRecord};
    use super::*;

    fn rec(id: &str, class: &str, polarity: Polarity, provenance: Provenance) -> SketchRecord {
        SketchRecord {
            id: id.into(),
            image_path: format!("{id}.png"),
            class_name: class.into(),
            category: crate::data::taxonomy::category_of(class).unwrap().into(),
            polarity,
            caption: "A drawing.".into(),
            qa_pairs: vec![QaPair::new("Q?", "A", QaKind::Instance)],
            provenance,
        }
    }

    fn corpus(originals_per_class: usize, classes: &[&str]) -> DatasetManifest {
        let mut records = Vec::new();
        for class in classes {
            for i in 0..originals_per_class {
                let slug = crate::data::taxonomy::class_slug(class);
                records.push(rec(
                    &format!("{slug}_{i:04}"),
                    class,
                    Polarity::Positive,
                    Provenance::Original,
                ));
            }
        }
        DatasetManifest::new(records)
    }

    #[test]
    fn sixty_forty_split_of_3000_originals() {
        let classes = crate::data::taxonomy::all_classes();
        let m = corpus(100, &classes);
        assert_eq!(m.len(), 3000);
        let (train, test) = split_dataset(&m, 0.6, 7).unwrap();
        assert_eq!(train.len(), 1800);
        assert_eq!(test.len(), 1200);
    }

    #[test]
    fn identical_inputs_and_seed_give_identical_splits() {
        let m = corpus(25, &["Fish", "Cat", "Mug"]);
        let (a_train, a_test) = split_dataset(&m, 0.8, 3).unwrap();
        let (b_train, b_test) = split_dataset(&m, 0.8, 3).unwrap();
        let ids = |m: &DatasetManifest| m.records.iter().map(|r| r.id.clone()).collect::<Vec<_>>();
        assert_eq!(ids(&a_train), ids(&b_train));
        assert_eq!(ids(&a_test), ids(&b_test));
        // Different seed reshuffles membership.
        let (c_train, _) = split_dataset(&m, 0.8, 4).unwrap();
        assert_ne!(ids(&a_train), ids(&c_train));
    }

    #[test]
    fn children_follow_their_parent() {
        let mut records = Vec::new();
        for i in 0..10 {
            records.push(rec(
                &format!("fish_{i}"),
                "Fish",
                Polarity::Positive,
                Provenance::Original,
            ));
            for tag in ["rotate+15", "blur-weak"] {
                records.push(rec(
                    &format!("fish_{i}__{tag}"),
                    "Fish",
                    Polarity::Positive,
                    Provenance::Augmented {
                        parent: format!("fish_{i}"),
                        tag: tag.into(),
                    },
                ));
            }
        }
        let m = DatasetManifest::new(records);
        let (train, test) = split_dataset(&m, 0.8, 11).unwrap();
        for part in [&train, &test] {
            let ids: std::collections::HashSet<&str> =
                part.records.iter().map(|r| r.id.as_str()).collect();
            for r in &part.records {
                if let Some(parent) = r.provenance.parent() {
                    assert!(ids.contains(parent), "{} separated from {}", r.id, parent);
                }
            }
        }
        // 8 families in train, 2 in test, 3 records per family.
        assert_eq!(train.len(), 24);
        assert_eq!(test.len(), 6);
    }

    #[test]
    fn single_original_class_is_an_error() {
        let m = corpus(1, &["Fish"]);
        assert!(matches!(
            split_dataset(&m, 0.5, 0),
            Err(DataError::InsufficientData { .. })
        ));
    }

    #[test]
    fn out_of_range_fraction_is_an_error() {
        let m = corpus(4, &["Fish"]);
        assert!(matches!(split_dataset(&m, 1.0, 0), Err(DataError::InvalidFraction(_))));
        assert!(matches!(split_dataset(&m, 0.0, 0), Err(DataError::InvalidFraction(_))));
    }
}
