//! Answer normalization and exact matching.
//!
//! The match predicate is a Kronecker delta over normalized strings:
//! lowercase, trim, strip terminal punctuation, collapse whitespace, and
//! canonicalize the number words zero through ten to digits. The rules are
//! centralized here and versioned so reward values stay reproducible.

use super::RewardError;

/// Bump when the normalization rules change; recorded in reports.
pub const NORMALIZATION_VERSION: u32 = 1;

const NUMBER_WORDS: [(&str, &str); 11] = [
    ("zero", "0"),
    ("one", "1"),
    ("two", "2"),
    ("three", "3"),
    ("four", "4"),
    ("five", "5"),
    ("six", "6"),
    ("seven", "7"),
    ("eight", "8"),
    ("nine", "9"),
    ("ten", "10"),
];

/// Canonical form of a free-form answer.
pub fn normalize_answer(s: &str) -> String {
    let mut t = s.trim().to_lowercase();
    while t
        .chars()
        .last()
        .map(|c| matches!(c, '.' | '!' | '?' | ',' | ';' | ':'))
        .unwrap_or(false)
    {
        t.pop();
    }
    t.split_whitespace()
        .map(|tok| {
            NUMBER_WORDS
                .iter()
                .find(|(w, _)| *w == tok)
                .map(|(_, d)| *d)
                .unwrap_or(tok)
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// 1 iff the normalized strings are equal. Errors on empty inputs.
pub fn answer_match(predicted: &str, gold: &str) -> Result<bool, RewardError> {
    if predicted.trim().is_empty() || gold.trim().is_empty() {
        return Err(RewardError::EmptyAnswer);
    }
    Ok(normalize_answer(predicted) == normalize_answer(gold))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn case_and_punctuation() {
        assert!(answer_match("Fish", "fish").unwrap());
        assert!(answer_match("fish.", "Fish").unwrap());
        assert!(answer_match("  yes ", "Yes!").unwrap());
    }

    #[test]
    fn number_words_canonicalize() {
        // The corpus stores counted answers as digits.
        assert!(answer_match("three", "3").unwrap());
        assert!(answer_match("Three.", "3").unwrap());
        assert!(answer_match("ten", "10").unwrap());
        // Only standalone tokens are rewritten.
        assert!(!answer_match("someone", "some1").unwrap());
    }

    #[test]
    fn inequality_after_normalization() {
        assert!(!answer_match("blue", "blue and red").unwrap());
        assert!(!answer_match("4", "3").unwrap());
    }

    #[test]
    fn whitespace_collapses() {
        assert!(answer_match("a  lot   of", "A lot of").unwrap());
    }

    #[test]
    fn empty_answers_are_errors() {
        assert!(matches!(answer_match("", "x"), Err(RewardError::EmptyAnswer)));
        assert!(matches!(answer_match("x", "  "), Err(RewardError::EmptyAnswer)));
    }

    #[test]
    fn normalization_is_idempotent() {
        for s in ["Three!", "  A Lot   Of.", "FISH", "seven seas", "ok..."] {
            let once = normalize_answer(s);
            assert_eq!(normalize_answer(&once), once);
        }
    }
}
