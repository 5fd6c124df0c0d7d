use coach_core::corpus::Chunk;
use coach_core::lexical::{bm25_score, Bm25Params, LexicalIndex};
use coach_core::text::tokenize;
use proptest::prelude::*;

fn chunk(id: &str, body: &str) -> Chunk {
    Chunk {
        chunk_id: id.into(),
        doc_id: id.into(),
        heading_path: Vec::new(),
        heading_level: 1,
        body: body.into(),
        char_count: body.chars().count(),
    }
}

const DOCS: [(&str, &str); 5] = [
    ("d1", "the kernel defines seven alphas"),
    ("d2", "alpha states track progress of the team and the work"),
    ("d3", "progress poker is a game played with alpha state cards"),
    (
        "d4",
        "pair programming pairs a driver with a navigator who review the code together while the team watches the work progress",
    ),
    ("d5", "stakeholders opportunity requirements"),
];

// Values computed once with a separate script straight from the formula
// (k1 = 1.2, b = 0.75, idf = ln(1 + (N - df + 0.5) / (df + 0.5)), avgdl = 9.6).
const EXPECTED: [(&str, [f64; 5]); 6] = [
    (
        "alpha states",
        [0.0, 2.2238564543652912, 0.8607960769513207, 0.0, 0.0],
    ),
    (
        "the team",
        [
            0.6704126086851799,
            1.59333186173088,
            0.0,
            1.2940398340067776,
            0.0,
        ],
    ),
    (
        "progress work",
        [
            0.0,
            1.3907591167778734,
            0.5299630398265528,
            0.9801018972568478,
            0.0,
        ],
    ),
    ("kernel", [1.7242954597674967, 0.0, 0.0, 0.0, 0.0]),
    (
        "pair programming code",
        [0.0, 0.0, 0.0, 2.8817457585484343, 0.0],
    ),
    ("stakeholders", [0.0, 0.0, 0.0, 0.0, 1.9287573719928914]),
];

#[test]
fn five_document_fixture_matches_hand_values() {
    let chunks: Vec<Chunk> = DOCS.iter().map(|(id, b)| chunk(id, b)).collect();
    let index = LexicalIndex::build(&chunks, Bm25Params::default()).unwrap();
    assert!((index.avg_doc_length - 9.6).abs() < 1e-12);
    for (query, expected) in EXPECTED {
        let q = tokenize(query);
        for ((id, _), want) in DOCS.iter().zip(expected) {
            let got = bm25_score(&index, &q, id).unwrap();
            assert!((got - want).abs() < 1e-9, "{query} / {id}: {got} vs {want}");
        }
    }
}

#[test]
fn single_document_worked_example() {
    let index = LexicalIndex::build(&[chunk("only", "alpha")], Bm25Params::default()).unwrap();
    let s = bm25_score(&index, &tokenize("alpha"), "only").unwrap();
    assert!((s - (4.0f64 / 3.0).ln()).abs() < 1e-12);
    assert!((s - 0.28768).abs() < 1e-5);
}

/// Direct transcription of the scoring formula over raw token lists.
fn oracle(docs: &[Vec<String>], query: &[String], d: usize) -> f64 {
    let n = docs.len() as f64;
    let avg = docs.iter().map(Vec::len).sum::<usize>() as f64 / n;
    let len = docs[d].len() as f64;
    let mut total = 0.0;
    for t in query {
        let tf = docs[d].iter().filter(|x| *x == t).count() as f64;
        if tf == 0.0 {
            continue;
        }
        let df = docs.iter().filter(|doc| doc.contains(t)).count() as f64;
        let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
        total += idf * tf * (1.2 + 1.0) / (tf + 1.2 * (1.0 - 0.75 + 0.75 * len / avg));
    }
    total
}

const WORDS: [&str; 8] = [
    "alpha", "team", "work", "state", "kernel", "card", "game", "code",
];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn index_agrees_with_oracle(
        bodies in prop::collection::vec(prop::collection::vec(0usize..8, 1..12), 1..8),
        query in prop::collection::vec(0usize..8, 1..4),
    ) {
        let docs: Vec<Vec<String>> = bodies
            .iter()
            .map(|b| b.iter().map(|&i| WORDS[i].to_string()).collect())
            .collect();
        let chunks: Vec<Chunk> = docs
            .iter()
            .enumerate()
            .map(|(i, d)| chunk(&format!("c{i}"), &d.join(" ")))
            .collect();
        let index = LexicalIndex::build(&chunks, Bm25Params::default()).unwrap();
        let q: Vec<String> = query.iter().map(|&i| WORDS[i].to_string()).collect();
        for i in 0..docs.len() {
            let got = index.score(&q, &format!("c{i}")).unwrap();
            prop_assert!((got - oracle(&docs, &q, i)).abs() < 1e-9);
        }
    }
}
