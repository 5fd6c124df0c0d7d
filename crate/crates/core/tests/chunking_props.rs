use std::path::PathBuf;

use coach_core::corpus::{chunk_document, DocType, Document, DocumentMeta, Topic};
use coach_core::text::tokenize;
use coach_core::ChunkPolicy;
use proptest::prelude::*;

// Body text and heading text use disjoint vocabularies so body words can be
// tracked through splitting and merging.
const BODY: [&str; 6] = ["alpha", "team", "work", "kernel", "card", "game"];
const HEAD: [&str; 3] = ["hone", "htwo", "hthree"];

#[derive(Debug, Clone)]
enum Block {
    Heading(u8, usize),
    Para(Vec<usize>),
}

fn block() -> impl Strategy<Value = Block> {
    prop_oneof![
        (1u8..=3, 0usize..3).prop_map(|(l, h)| Block::Heading(l, h)),
        prop::collection::vec(0usize..6, 1..15).prop_map(Block::Para),
    ]
}

fn render(blocks: &[Block]) -> String {
    let mut out = String::new();
    for b in blocks {
        match b {
            Block::Heading(l, h) => {
                out.push_str(&format!("{} {}\n\n", "#".repeat(*l as usize), HEAD[*h]))
            }
            Block::Para(ws) => {
                let words: Vec<&str> = ws.iter().map(|&i| BODY[i]).collect();
                out.push_str(&words.join(" "));
                out.push_str("\n\n");
            }
        }
    }
    out
}

fn body_words(text: &str) -> Vec<String> {
    tokenize(text)
        .into_iter()
        .filter(|t| BODY.contains(&t.as_str()))
        .collect()
}

fn doc(text: String) -> Document {
    Document {
        meta: DocumentMeta {
            doc_id: "doc".into(),
            title: "Title".into(),
            topic: Topic::Cards,
            doc_type: DocType::Guide,
            path: PathBuf::from("doc.md"),
        },
        text,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn chunking_preserves_text_and_limits(blocks in prop::collection::vec(block(), 0..30), min in 0usize..60) {
        let policy = ChunkPolicy { max_chars: 160, min_chars: min, ..ChunkPolicy::default() };
        let text = render(&blocks);
        let chunks = chunk_document(&doc(text.clone()), &policy).unwrap();

        let joined: Vec<String> = chunks.iter().flat_map(|c| body_words(&c.body)).collect();
        prop_assert_eq!(joined, body_words(&text));

        for (i, c) in chunks.iter().enumerate() {
            prop_assert_eq!(&c.chunk_id, &format!("doc:{i:04}"));
            prop_assert_eq!(c.char_count, c.body.chars().count());
            prop_assert!(!c.body.trim().is_empty());
            prop_assert!(!c.heading_path.is_empty());
            // every generated paragraph is under 160 chars, so no chunk may exceed it
            prop_assert!(c.char_count <= policy.max_chars, "{} chars", c.char_count);
        }
    }

    #[test]
    fn chunking_is_deterministic(blocks in prop::collection::vec(block(), 0..20)) {
        let d = doc(render(&blocks));
        let p = ChunkPolicy::default();
        prop_assert_eq!(chunk_document(&d, &p).unwrap(), chunk_document(&d, &p).unwrap());
    }
}
