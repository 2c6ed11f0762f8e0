//! Record types for the sketch/caption/QA triplet corpus.

use serde::{Deserialize, Serialize};

/// Whether a question probes the depicted instance or the sketch style.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QaKind {
    Instance,
    Sketch,
}

impl std::fmt::Display for QaKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            QaKind::Instance => write!(f, "instance"),
            QaKind::Sketch => write!(f, "sketch"),
        }
    }
}

/// One question/answer pair attached to a record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaPair {
    #[serde(rename = "q")]
    pub question: String,
    #[serde(rename = "a")]
    pub answer: String,
    pub kind: QaKind,
}

impl QaPair {
    pub fn new(question: impl Into<String>, answer: impl Into<String>, kind: QaKind) -> Self {
        Self {
            question: question.into(),
            answer: answer.into(),
            kind,
        }
    }

    /// Non-empty question and answer after trimming.
    pub fn is_well_formed(&self) -> bool {
        !self.question.trim().is_empty() && !self.answer.trim().is_empty()
    }
}

/// In-style exemplar vs deliberately off-style contrastive exemplar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Positive,
    Negative,
}

impl std::fmt::Display for Polarity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Polarity::Positive => write!(f, "positive"),
            Polarity::Negative => write!(f, "negative"),
        }
    }
}

/// Where a record came from: a source drawing, or one of its augmentations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Original,
    Augmented { parent: String, tag: String },
}

impl Provenance {
    pub fn is_original(&self) -> bool {
        matches!(self, Provenance::Original)
    }

    pub fn parent(&self) -> Option<&str> {
        match self {
            Provenance::Original => None,
            Provenance::Augmented { parent, .. } => Some(parent),
        }
    }
}

/// One sketch with its caption, QA pairs, and taxonomy metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SketchRecord {
    pub id: String,
    #[serde(rename = "image")]
    pub image_path: String,
    #[serde(rename = "class")]
    pub class_name: String,
    pub category: String,
    pub polarity: Polarity,
    pub caption: String,
    #[serde(rename = "qa")]
    pub qa_pairs: Vec<QaPair>,
    pub provenance: Provenance,
}

impl SketchRecord {
    /// Count of instance-kind questions (the `N` of the reward blend).
    pub fn n_instance(&self) -> usize {
        self.qa_pairs
            .iter()
            .filter(|q| q.kind == QaKind::Instance)
            .count()
    }

    /// Count of sketch-kind questions (the `M` of the reward blend).
    pub fn n_sketch(&self) -> usize {
        self.qa_pairs
            .iter()
            .filter(|q| q.kind == QaKind::Sketch)
            .count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_counts_partition_the_qa_list() {
        let rec = SketchRecord {
            id: "fish_49".into(),
            image_path: "images/fish_49.png".into(),
            class_name: "Fish".into(),
            category: "Animals".into(),
            polarity: Polarity::Positive,
            caption: "A simple drawing of a fish with three curved lines on its body and a round eye on a white background.".into(),
            qa_pairs: vec![
                QaPair::new("What animal is in the picture?", "Fish", QaKind::Instance),
                QaPair::new("How many lines are on the fish?", "3", QaKind::Instance),
                QaPair::new("Is the background white?", "Yes", QaKind::Sketch),
                QaPair::new("Is this a simple or a complex drawing?", "Simple", QaKind::Sketch),
            ],
            provenance: Provenance::Original,
        };
        assert_eq!(rec.n_instance() + rec.n_sketch(), rec.qa_pairs.len());
        assert_eq!(rec.n_instance(), 2);
        assert_eq!(rec.n_sketch(), 2);
    }

    #[test]
    fn provenance_serialization_shapes() {
        let orig = serde_json::to_string(&Provenance::Original).unwrap();
        assert_eq!(orig, "\"original\"");
        let aug = serde_json::to_string(&Provenance::Augmented {
            parent: "fish_1".into(),
            tag: "rotate+15".into(),
        })
        .unwrap();
        assert!(aug.contains("\"parent\":\"fish_1\""));
    }
}
