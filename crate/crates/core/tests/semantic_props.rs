use coach_core::embedding::HashedEmbedder;
use coach_core::evaluation::semantic_score;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

const WORDS: &[&str] = &[
    "alpha",
    "state",
    "kernel",
    "team",
    "work",
    "way",
    "of",
    "working",
    "stakeholders",
    "opportunity",
    "requirements",
    "software",
    "system",
    "practice",
    "sprint",
    "review",
    "cards",
    "game",
    "progress",
    "the",
];

fn sentence(rng: &mut StdRng) -> String {
    let n = rng.random_range(1..15);
    (0..n)
        .map(|_| WORDS[rng.random_range(0..WORDS.len())])
        .collect::<Vec<_>>()
        .join(" ")
}

#[test]
fn identity_scores_exactly_one() {
    let e = HashedEmbedder::new(384);
    let mut rng = StdRng::seed_from_u64(7);
    for _ in 0..50 {
        let s = sentence(&mut rng);
        let score = semantic_score(&s, &s, &e).unwrap();
        assert_eq!((score.precision, score.recall, score.f1), (1.0, 1.0, 1.0));
    }
}

#[test]
fn swapping_arguments_swaps_precision_and_recall() {
    let e = HashedEmbedder::new(384);
    let mut rng = StdRng::seed_from_u64(8);
    for _ in 0..100 {
        let (a, b) = (sentence(&mut rng), sentence(&mut rng));
        let ab = semantic_score(&a, &b, &e).unwrap();
        let ba = semantic_score(&b, &a, &e).unwrap();
        assert!((ab.precision - ba.recall).abs() < 1e-12);
        assert!((ab.recall - ba.precision).abs() < 1e-12);
        assert!((ab.f1 - ba.f1).abs() < 1e-12);
    }
}

#[test]
fn f1_lies_between_precision_and_recall() {
    let e = HashedEmbedder::new(384);
    let mut rng = StdRng::seed_from_u64(9);
    for _ in 0..100 {
        let (a, b) = (sentence(&mut rng), sentence(&mut rng));
        let s = semantic_score(&a, &b, &e).unwrap();
        let lo = s.precision.min(s.recall);
        let hi = s.precision.max(s.recall);
        assert!(s.f1 >= lo - 1e-12 && s.f1 <= hi + 1e-12, "{s:?}");
        assert!(s.f1 <= 1.0 + 1e-12);
    }
}

#[test]
fn empty_text_is_rejected() {
    let e = HashedEmbedder::new(8);
    assert!(semantic_score("", "alpha", &e).is_err());
    assert!(semantic_score("alpha", "  ...  ", &e).is_err());
}
