//! Greedy token-matching similarity between a generated answer and a reference
//! answer. Tokens are embedded one at a time with a pluggable [`Embedder`];
//! there is no IDF weighting.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::embedding::{Embedder, EmbeddingVector};
use crate::error::{CoachError, Result};
use crate::par::Execution;
use crate::text::tokenize;
use crate::vector::cosine_similarity;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemanticScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl SemanticScore {
    pub fn from_pr(precision: f64, recall: f64) -> Self {
        let denom = precision + recall;
        let f1 = if denom == 0.0 {
            0.0
        } else {
            2.0 * (precision * recall) / denom
        };
        SemanticScore {
            precision,
            recall,
            f1,
        }
    }
}

/// Scores `candidate` against `reference`.
///
/// Precision is the mean over candidate tokens of the best cosine to any
/// reference token; recall is the same in the other direction. Identical
/// tokens match with similarity exactly 1.
pub fn semantic_score(
    candidate: &str,
    reference: &str,
    embedder: &dyn Embedder,
) -> Result<SemanticScore> {
    let cand = tokenize(candidate);
    let refs = tokenize(reference);
    if cand.is_empty() || refs.is_empty() {
        return Err(CoachError::InvalidInput(
            "semantic scoring needs non-empty candidate and reference".into(),
        ));
    }

    let mut unique: Vec<String> = cand.iter().chain(&refs).cloned().collect();
    unique.sort();
    unique.dedup();
    let vectors = embedder.embed_batch(&unique, Execution::Sequential)?;
    let table: BTreeMap<&str, &EmbeddingVector> =
        unique.iter().map(String::as_str).zip(&vectors).collect();

    let sim = |a: &str, b: &str| -> Result<f64> {
        if a == b {
            return Ok(1.0);
        }
        cosine_similarity(table[a], table[b])
    };

    let greedy = |from: &[String], to: &[String]| -> Result<f64> {
        let mut total = 0.0;
        for a in from {
            let mut best = f64::NEG_INFINITY;
            for b in to {
                best = best.max(sim(a, b)?);
            }
            total += best;
        }
        Ok(total / from.len() as f64)
    };

    Ok(SemanticScore::from_pr(
        greedy(&cand, &refs)?,
        greedy(&refs, &cand)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::HashedEmbedder;
    use std::collections::HashMap;

    struct Table(HashMap<&'static str, Vec<f64>>);

    impl Embedder for Table {
        fn dim(&self) -> usize {
            2
        }
        fn embed_text(&self, text: &str) -> Result<EmbeddingVector> {
            EmbeddingVector::normalized(self.0[text].clone())
        }
    }

    #[test]
    fn identity_is_exactly_one() {
        let e = HashedEmbedder::new(64);
        let s = semantic_score(
            "Alpha states track progress.",
            "alpha states track progress",
            &e,
        )
        .unwrap();
        assert_eq!(
            s,
            SemanticScore {
                precision: 1.0,
                recall: 1.0,
                f1: 1.0
            }
        );
    }

    #[test]
    fn three_token_fixture() {
        // unit vectors at 0°, 60° and 90°
        let h = 3f64.sqrt() / 2.0;
        let e = Table(HashMap::from([
            ("a", vec![1.0, 0.0]),
            ("b", vec![0.5, h]),
            ("c", vec![0.0, 1.0]),
        ]));
        // candidate {a, a, b}, reference {c}: every candidate token's best is its cosine to c
        let s = semantic_score("a a b", "c", &e).unwrap();
        assert!((s.precision - (0.0 + 0.0 + h) / 3.0).abs() < 1e-12);
        assert!((s.recall - h).abs() < 1e-12);
        // candidate {a, c}, reference {b}: cos(a,b)=0.5, cos(c,b)=h
        let s = semantic_score("a c", "b", &e).unwrap();
        assert!((s.precision - (0.5 + h) / 2.0).abs() < 1e-12);
        assert!((s.recall - h).abs() < 1e-12);
    }

    #[test]
    fn swap_exchanges_precision_and_recall() {
        let e = HashedEmbedder::new(32);
        let a = semantic_score(
            "the team uses sprint planning",
            "planning happens with the whole team",
            &e,
        )
        .unwrap();
        let b = semantic_score(
            "planning happens with the whole team",
            "the team uses sprint planning",
            &e,
        )
        .unwrap();
        assert_eq!(a.precision, b.recall);
        assert_eq!(a.recall, b.precision);
        assert_eq!(a.f1, b.f1);
    }

    #[test]
    fn empty_inputs_are_rejected() {
        let e = HashedEmbedder::new(8);
        assert!(semantic_score("", "x", &e).is_err());
        assert!(semantic_score("x", " ,. ", &e).is_err());
    }

    #[test]
    fn f1_of_zero_pair_is_zero() {
        assert_eq!(SemanticScore::from_pr(0.0, 0.0).f1, 0.0);
    }
}
