//! QA-faithfulness scoring: the per-question fraction correct and the
//! alpha-blended instance/sketch reward.

use serde::{Deserialize, Serialize};

use super::backend::VqaBackend;
use super::normalize::{answer_match, NORMALIZATION_VERSION};
use super::RewardError;
use crate::data::{QaKind, QaPair};

/// One scored question.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuestionVerdict {
    pub question: String,
    pub gold: String,
    pub predicted: String,
    pub correct: bool,
    pub kind: QaKind,
}

/// Per-image reward report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RewardReport {
    pub verdicts: Vec<QuestionVerdict>,
    pub r_instance: f64,
    pub r_sketch: f64,
    pub r_vqa: f64,
    pub alpha: f64,
    /// True when one question kind was absent and the other kind's score
    /// was used directly.
    pub fallback_single_kind: bool,
    pub normalization_version: u32,
}

fn score_questions(
    backend: &dyn VqaBackend,
    image_png: &[u8],
    qas: &[QaPair],
) -> Result<Vec<QuestionVerdict>, RewardError> {
    qas.iter()
        .map(|qa| {
            let predicted = backend.answer(image_png, &qa.question)?;
            let correct = match answer_match(&predicted, &qa.answer) {
                Ok(c) => c,
                // An empty model answer is simply wrong, not a scoring error.
                Err(RewardError::EmptyAnswer) => false,
                Err(e) => return Err(e),
            };
            Ok(QuestionVerdict {
                question: qa.question.clone(),
                gold: qa.answer.clone(),
                predicted,
                correct,
                kind: qa.kind,
            })
        })
        .collect()
}

/// Fraction of questions answered correctly, in [0, 1].
pub fn tifa_score(
    backend: &dyn VqaBackend,
    image_png: &[u8],
    qas: &[QaPair],
) -> Result<f64, RewardError> {
    if qas.is_empty() {
        return Err(RewardError::EmptyQaSet);
    }
    let verdicts = score_questions(backend, image_png, qas)?;
    let correct = verdicts.iter().filter(|v| v.correct).count();
    Ok(correct as f64 / qas.len() as f64)
}

fn blended(
    backend: &dyn VqaBackend,
    image_png: &[u8],
    qas: &[QaPair],
    alpha: f64,
    allow_fallback: bool,
) -> Result<RewardReport, RewardError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(RewardError::InvalidAlpha(alpha));
    }
    if qas.is_empty() {
        return Err(RewardError::EmptyQaSet);
    }
    let verdicts = score_questions(backend, image_png, qas)?;
    let frac = |kind: QaKind| -> Option<f64> {
        let of_kind: Vec<_> = verdicts.iter().filter(|v| v.kind == kind).collect();
        if of_kind.is_empty() {
            None
        } else {
            Some(of_kind.iter().filter(|v| v.correct).count() as f64 / of_kind.len() as f64)
        }
    };
    let (r_instance, r_sketch, r_vqa, fallback) = match (frac(QaKind::Instance), frac(QaKind::Sketch)) {
        (Some(ri), Some(rs)) => (ri, rs, alpha * ri + (1.0 - alpha) * rs, false),
        (Some(ri), None) if allow_fallback => {
            log::debug!("sketch questions absent; using instance score as the reward");
            (ri, f64::NAN, ri, true)
        }
        (None, Some(rs)) if allow_fallback => {
            log::debug!("instance questions absent; using sketch score as the reward");
            (f64::NAN, rs, rs, true)
        }
        (Some(_), None) => return Err(RewardError::MissingKind(QaKind::Sketch)),
        (None, _) => return Err(RewardError::MissingKind(QaKind::Instance)),
    };
    debug_assert!((0.0..=1.0).contains(&r_vqa));
    Ok(RewardReport {
        verdicts,
        r_instance,
        r_sketch,
        r_vqa,
        alpha,
        fallback_single_kind: fallback,
        normalization_version: NORMALIZATION_VERSION,
    })
}

/// Alpha-blended reward over instance and sketch questions. Requires at
/// least one question of each kind.
pub fn vqa_reward(
    backend: &dyn VqaBackend,
    image_png: &[u8],
    qas: &[QaPair],
    alpha: f64,
) -> Result<RewardReport, RewardError> {
    blended(backend, image_png, qas, alpha, false)
}

/// Like [`vqa_reward`], but when one kind has no questions the other kind's
/// score is used as the reward (logged per sample). Used during rollouts.
pub fn vqa_reward_with_fallback(
    backend: &dyn VqaBackend,
    image_png: &[u8],
    qas: &[QaPair],
    alpha: f64,
) -> Result<RewardReport, RewardError> {
    blended(backend, image_png, qas, alpha, true)
}

#[cfg(test)]
mod tests {
    use super::super::backend::{ConstantBackend, OracleBackend, ScriptedBackend};
    use super::*;
    use crate::raster::{encode_png, filled};
    use image::Rgb;

    fn fish_fixture() -> (Vec<u8>, Vec<QaPair>) {
        let png = encode_png(&filled(8, Rgb([250, 250, 250])));
        let qas = vec![
            QaPair::new("What animal is in the picture?", "Fish", QaKind::Instance),
            QaPair::new("How many lines are on the fish?", "3", QaKind::Instance),
            QaPair::new("Is the background white?", "Yes", QaKind::Sketch),
            QaPair::new("Is this a simple or a complex drawing?", "Simple", QaKind::Sketch),
        ];
        (png, qas)
    }

    fn oracle_for(png: &[u8], qas: &[QaPair]) -> OracleBackend {
        let pairs: Vec<(&[u8], &QaPair)> = qas.iter().map(|q| (png, q)).collect();
        OracleBackend::from_pairs(&pairs)
    }

    #[test]
    fn oracle_scores_one() {
        let (png, qas) = fish_fixture();
        let oracle = oracle_for(&png, &qas);
        assert_eq!(tifa_score(&oracle, &png, &qas).unwrap(), 1.0);
        let report = vqa_reward(&oracle, &png, &qas, 0.5).unwrap();
        assert_eq!(report.r_vqa, 1.0);
        assert_eq!(report.r_instance, 1.0);
        assert_eq!(report.r_sketch, 1.0);
    }

    #[test]
    fn adversarial_scores_zero() {
        let (png, qas) = fish_fixture();
        let wrong = ConstantBackend { answer: "xyzzy".into() };
        assert_eq!(tifa_score(&wrong, &png, &qas).unwrap(), 0.0);
        // Empty answers count as incorrect rather than erroring the scorer.
        let empty = ConstantBackend { answer: "".into() };
        assert_eq!(tifa_score(&empty, &png, &qas).unwrap(), 0.0);
    }

    #[test]
    fn three_of_four_is_075() {
        let (png, qas) = fish_fixture();
        let b = ScriptedBackend::new()
            .with_question("What animal is in the picture?", "fish")
            .with_question("How many lines are on the fish?", "three")
            .with_question("Is the background white?", "Yes.")
            .with_question("Is this a simple or a complex drawing?", "complex");
        let got = tifa_score(&b, &png, &qas).unwrap();
        // Brute-force count over the fixture.
        let mut correct = 0;
        for qa in &qas {
            let pred = b.answer(&png, &qa.question).unwrap();
            if answer_match(&pred, &qa.answer).unwrap() {
                correct += 1;
            }
        }
        assert_eq!(got, correct as f64 / qas.len() as f64);
        assert_eq!(got, 0.75);
    }

    #[test]
    fn blend_arithmetic_and_boundaries() {
        let (png, qas) = fish_fixture();
        // Instance right, sketch half right.
        let b = ScriptedBackend::new()
            .with_question("What animal is in the picture?", "Fish")
            .with_question("How many lines are on the fish?", "3")
            .with_question("Is the background white?", "Yes")
            .with_question("Is this a simple or a complex drawing?", "complex");
        let r = vqa_reward(&b, &png, &qas, 0.5).unwrap();
        assert_eq!(r.r_instance, 1.0);
        assert_eq!(r.r_sketch, 0.5);
        assert!((r.r_vqa - 0.75).abs() < 1e-15);

        // alpha = 1: sketch answers are irrelevant.
        let r = vqa_reward(&b, &png, &qas, 1.0).unwrap();
        assert_eq!(r.r_vqa, r.r_instance);

        // alpha outside [0, 1] is rejected.
        assert!(matches!(
            vqa_reward(&b, &png, &qas, 1.5),
            Err(RewardError::InvalidAlpha(_))
        ));
    }

    #[test]
    fn empty_qa_set_is_an_error() {
        let (png, _) = fish_fixture();
        let b = ConstantBackend { answer: "x".into() };
        assert!(matches!(
            tifa_score(&b, &png, &[]),
            Err(RewardError::EmptyQaSet)
        ));
    }

    #[test]
    fn missing_kind_errors_or_falls_back() {
        let (png, qas) = fish_fixture();
        let instance_only: Vec<QaPair> = qas
            .iter()
            .filter(|q| q.kind == QaKind::Instance)
            .cloned()
            .collect();
        let oracle = oracle_for(&png, &qas);
        assert!(matches!(
            vqa_reward(&oracle, &png, &instance_only, 0.5),
            Err(RewardError::MissingKind(QaKind::Sketch))
        ));
        let r = vqa_reward_with_fallback(&oracle, &png, &instance_only, 0.5).unwrap();
        assert!(r.fallback_single_kind);
        assert_eq!(r.r_vqa, 1.0);
    }

    #[test]
    fn reward_is_affine_in_alpha() {
        let (png, qas) = fish_fixture();
        let b = ScriptedBackend::new()
            .with_question("What animal is in the picture?", "Fish")
            .with_question("How many lines are on the fish?", "4")
            .with_question("Is the background white?", "No")
            .with_question("Is this a simple or a complex drawing?", "Simple");
        let r0 = vqa_reward(&b, &png, &qas, 0.0).unwrap();
        let r1 = vqa_reward(&b, &png, &qas, 1.0).unwrap();
        for alpha in [0.1, 0.25, 0.5, 0.9] {
            let r = vqa_reward(&b, &png, &qas, alpha).unwrap();
            let slope = r1.r_vqa - r0.r_vqa;
            assert!((r.r_vqa - (r0.r_vqa + alpha * slope)).abs() < 1e-15);
            assert!((slope - (r.r_instance - r.r_sketch)).abs() < 1e-15);
        }
    }
}
