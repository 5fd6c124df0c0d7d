//! Exact cosine-similarity search over chunk embeddings.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Chunk;
use crate::embedding::{Embedder, EmbeddingVector};
use crate::error::{CoachError, Result};
use crate::par::{self, Execution};

const SNAPSHOT_FORMAT: &str = "essence-coach/vector-index";
const SNAPSHOT_VERSION: u32 = 1;

/// Cosine of the angle between two vectors, clamped to `[-1, 1]`.
/// A zero vector has similarity 0 with everything.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    cosine_raw(a.values(), b.values())
}

pub(crate) fn cosine_raw(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(CoachError::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorEntry {
    pub chunk_id: String,
    pub vector: EmbeddingVector,
}

/// In-process exhaustive vector store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorIndex {
    pub dim: usize,
    pub entries: Vec<VectorEntry>,
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    format: String,
    version: u32,
    #[serde(flatten)]
    index: VectorIndex,
}

impl VectorIndex {
    pub fn empty(dim: usize) -> Self {
        VectorIndex {
            dim,
            entries: Vec::new(),
        }
    }

    /// Wraps precomputed vectors, checking dimensions, unit norm and id uniqueness.
    pub fn from_entries(dim: usize, entries: Vec<VectorEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if e.vector.dim() != dim {
                return Err(CoachError::DimensionMismatch {
                    expected: dim,
                    actual: e.vector.dim(),
                });
            }
            if !e.vector.is_unit() {
                return Err(CoachError::InvalidInput(format!(
                    "vector for {} is not unit-norm",
                    e.chunk_id
                )));
            }
            if !seen.insert(e.chunk_id.as_str()) {
                return Err(CoachError::DuplicateId(e.chunk_id.clone()));
            }
        }
        Ok(VectorIndex { dim, entries })
    }

    /// Embeds `heading_path + body` of every chunk.
    pub fn build(chunks: &[Chunk], embedder: &dyn Embedder, exec: Execution) -> Result<Self> {
        let texts: Vec<String> = chunks.iter().map(Chunk::index_text).collect();
        let vectors = embedder.embed_batch(&texts, exec)?;
        let entries = chunks
            .iter()
            .zip(vectors)
            .map(|(c, vector)| VectorEntry {
                chunk_id: c.chunk_id.clone(),
                vector,
            })
            .collect();
        Self::from_entries(embedder.dim(), entries)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn search(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<(String, f64)>> {
        self.search_with(query, k, Execution::default())
    }

    /// Top-`k` by descending cosine, ties by ascending chunk id.
    pub fn search_with(
        &self,
        query: &EmbeddingVector,
        k: usize,
        exec: Execution,
    ) -> Result<Vec<(String, f64)>> {
        if query.dim() != self.dim {
            return Err(CoachError::DimensionMismatch {
                expected: self.dim,
                actual: query.dim(),
            });
        }
        let scores = par::try_map(exec, &self.entries, |e| {
            cosine_raw(query.values(), e.vector.values()).map(|s| (e.chunk_id.as_str(), s))
        })?;
        let mut ranked: Vec<(&str, f64)> = scores;
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(k);
        Ok(ranked
            .into_iter()
            .map(|(id, s)| (id.to_string(), s))
            .collect())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let snap = Snapshot {
            format: SNAPSHOT_FORMAT.into(),
            version: SNAPSHOT_VERSION,
            index: self.clone(),
        };
        let json =
            serde_json::to_string(&snap).map_err(|e| CoachError::parse("vector index", e))?;
        fs::write(path, json).map_err(|e| CoachError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = fs::read_to_string(path).map_err(|e| CoachError::io(path, e))?;
        let snap: Snapshot = serde_json::from_str(&raw)
            .map_err(|e| CoachError::parse(path.display().to_string(), e))?;
        if snap.format != SNAPSHOT_FORMAT || snap.version != SNAPSHOT_VERSION {
            return Err(CoachError::parse(
                path.display().to_string(),
                format!("unsupported snapshot {} v{}", snap.format, snap.version),
            ));
        }
        Self::from_entries(snap.index.dim, snap.index.entries)
    }
}

pub fn build_vector_index(chunks: &[Chunk], embedder: &dyn Embedder) -> Result<VectorIndex> {
    VectorIndex::build(chunks, embedder, Execution::default())
}

pub fn search_vector(
    index: &VectorIndex,
    query: &EmbeddingVector,
    k: usize,
) -> Result<Vec<(String, f64)>> {
    index.search(query, k)
}
