//! BM25 keyword index over chunks.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Chunk;
use crate::error::{CoachError, Result};
use crate::text::tokenize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Posting {
    pub chunk_id: String,
    pub tf: u32,
}

/// Immutable inverted index. Postings are kept in chunk order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexicalIndex {
    pub params: Bm25Params,
    pub postings: BTreeMap<String, Vec<Posting>>,
    pub doc_lengths: BTreeMap<String, u32>,
    pub avg_doc_length: f64,
    pub corpus_size: usize,
}

impl LexicalIndex {
    /// Indexes `heading_path + body` of every chunk (see [`Chunk::index_text`]).
    pub fn build(chunks: &[Chunk], params: Bm25Params) -> Result<Self> {
        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        let mut doc_lengths = BTreeMap::new();
        for chunk in chunks {
            let tokens = tokenize(&chunk.index_text());
            if doc_lengths
                .insert(chunk.chunk_id.clone(), tokens.len() as u32)
                .is_some()
            {
                return Err(CoachError::DuplicateId(chunk.chunk_id.clone()));
            }
            let mut tf: HashMap<String, u32> = HashMap::new();
            for t in tokens {
                *tf.entry(t).or_default() += 1;
            }
            for (term, count) in tf {
                postings.entry(term).or_default().push(Posting {
                    chunk_id: chunk.chunk_id.clone(),
                    tf: count,
                });
            }
        }
        for list in postings.values_mut() {
            list.sort_by(|a, b| a.chunk_id.cmp(&b.chunk_id));
        }
        let corpus_size = doc_lengths.len();
        let avg_doc_length = if corpus_size == 0 {
            0.0
        } else {
            doc_lengths.values().map(|&l| f64::from(l)).sum::<f64>() / corpus_size as f64
        };
        Ok(LexicalIndex {
            params,
            postings,
            doc_lengths,
            avg_doc_length,
            corpus_size,
        })
    }

    pub fn len(&self) -> usize {
        self.corpus_size
    }

    pub fn is_empty(&self) -> bool {
        self.corpus_size == 0
    }

    pub fn document_frequency(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    /// Smoothed IDF, `ln(1 + (N - df + 0.5) / (df + 0.5))`; positive for every df in `0..=N`.
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.corpus_size as f64;
        let df = self.document_frequency(term) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    fn term_frequency(&self, term: &str, chunk_id: &str) -> u32 {
        self.postings
            .get(term)
            .and_then(|list| {
                list.binary_search_by(|p| p.chunk_id.as_str().cmp(chunk_id))
                    .ok()
                    .map(|i| list[i].tf)
            })
            .unwrap_or(0)
    }

    fn term_weight(&self, idf: f64, tf: u32, len: u32) -> f64 {
        if tf == 0 {
            return 0.0;
        }
        let Bm25Params { k1, b } = self.params;
        let tf = f64::from(tf);
        let len_ratio = if self.avg_doc_length > 0.0 {
            f64::from(len) / self.avg_doc_length
        } else {
            1.0
        };
        idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * len_ratio))
    }

    /// BM25 score of one chunk; every occurrence of a term in the query counts.
    pub fn score(&self, query_tokens: &[String], chunk_id: &str) -> Result<f64> {
        let len = *self
            .doc_lengths
            .get(chunk_id)
            .ok_or_else(|| CoachError::NotFound(format!("chunk {chunk_id}")))?;
        Ok(query_tokens
            .iter()
            .map(|t| self.term_weight(self.idf(t), self.term_frequency(t, chunk_id), len))
            .sum())
    }

    /// Top-`k` chunks by descending score, ties by ascending chunk id; zero scores excluded.
    pub fn search(&self, query: &str, k: usize) -> Vec<(String, f64)> {
        let tokens = tokenize(query);
        if k == 0 || tokens.is_empty() {
            return Vec::new();
        }
        let mut acc: HashMap<&str, f64> = HashMap::new();
        for t in &tokens {
            let Some(list) = self.postings.get(t) else {
                continue;
            };
            let idf = self.idf(t);
            for p in list {
                let len = self.doc_lengths[&p.chunk_id];
                *acc.entry(p.chunk_id.as_str()).or_default() += self.term_weight(idf, p.tf, len);
            }
        }
        let mut ranked: Vec<(String, f64)> = acc
            .into_iter()
            .filter(|(_, s)| *s > 0.0)
            .map(|(id, s)| (id.to_string(), s))
            .collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(k);
        ranked
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json =
            serde_json::to_string(self).map_err(|e| CoachError::parse("lexical index", e))?;
        fs::write(path, json).map_err(|e| CoachError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = fs::read_to_string(path).map_err(|e| CoachError::io(path, e))?;
        serde_json::from_str(&raw).map_err(|e| CoachError::parse(path.display().to_string(), e))
    }
}

pub fn build_lexical_index(chunks: &[Chunk], params: Bm25Params) -> Result<LexicalIndex> {
    LexicalIndex::build(chunks, params)
}

pub fn bm25_score(index: &LexicalIndex, query_tokens: &[String], chunk_id: &str) -> Result<f64> {
    index.score(query_tokens, chunk_id)
}

pub fn search_lexical(index: &LexicalIndex, query: &str, k: usize) -> Vec<(String, f64)> {
    index.search(query, k)
}
