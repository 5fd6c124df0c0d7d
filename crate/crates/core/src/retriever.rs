use std::collections::HashMap;
use std::sync::Arc;

use crate::corpus::Chunk;
use crate::embedding::Embedder;
use crate::ensemble::{fuse, EnsembleConfig, RetrievedContext, Source};
use crate::error::{CoachError, Result};
use crate::lexical::{Bm25Params, LexicalIndex};
use crate::par::{self, Execution};
use crate::vector::VectorIndex;

/// Both indexes over one chunk set plus the query embedder.
pub struct Retriever {
    chunks: Vec<Chunk>,
    by_id: HashMap<String, usize>,
    lexical: LexicalIndex,
    vector: VectorIndex,
    embedder: Arc<dyn Embedder>,
    config: EnsembleConfig,
    exec: Execution,
}

/// Result of [`Retriever::retrieve_with_fallback`].
#[derive(Debug, Clone)]
pub struct RetrievalOutcome {
    pub contexts: Vec<RetrievedContext>,
    /// Set when the vector half failed and only lexical results were used.
    pub fallback_reason: Option<String>,
}

impl Retriever {
    pub fn build(
        chunks: Vec<Chunk>,
        embedder: Arc<dyn Embedder>,
        config: EnsembleConfig,
        bm25: Bm25Params,
    ) -> Result<Self> {
        let exec = Execution::default();
        let lexical = LexicalIndex::build(&chunks, bm25)?;
        let vector = VectorIndex::build(&chunks, embedder.as_ref(), exec)?;
        Self::from_parts(chunks, lexical, vector, embedder, config)
    }

    /// Assembles a retriever from prebuilt (e.g. snapshot-loaded) indexes.
    pub fn from_parts(
        chunks: Vec<Chunk>,
        lexical: LexicalIndex,
        vector: VectorIndex,
        embedder: Arc<dyn Embedder>,
        config: EnsembleConfig,
    ) -> Result<Self> {
        config.validate()?;
        if vector.dim != embedder.dim() {
            return Err(CoachError::DimensionMismatch {
                expected: vector.dim,
                actual: embedder.dim(),
            });
        }
        let mut by_id = HashMap::with_capacity(chunks.len());
        for (i, c) in chunks.iter().enumerate() {
            if by_id.insert(c.chunk_id.clone(), i).is_some() {
                return Err(CoachError::DuplicateId(c.chunk_id.clone()));
            }
        }
        let same_set = lexical.len() == chunks.len()
            && vector.len() == chunks.len()
            && lexical.doc_lengths.keys().all(|id| by_id.contains_key(id))
            && vector
                .entries
                .iter()
                .all(|e| by_id.contains_key(&e.chunk_id));
        if !same_set {
            return Err(CoachError::InvalidInput(
                "lexical and vector indexes do not cover the same chunk set".into(),
            ));
        }
        Ok(Retriever {
            chunks,
            by_id,
            lexical,
            vector,
            embedder,
            config,
            exec: Execution::default(),
        })
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn config(&self) -> &EnsembleConfig {
        &self.config
    }

    pub fn chunks(&self) -> &[Chunk] {
        &self.chunks
    }

    pub fn chunk(&self, chunk_id: &str) -> Option<&Chunk> {
        self.by_id.get(chunk_id).map(|&i| &self.chunks[i])
    }

    pub fn lexical(&self) -> &LexicalIndex {
        &self.lexical
    }

    pub fn vector(&self) -> &VectorIndex {
        &self.vector
    }

    pub fn embedder(&self) -> &Arc<dyn Embedder> {
        &self.embedder
    }

    fn attach(&self, hits: Vec<crate::ensemble::FusedHit>) -> Vec<RetrievedContext> {
        hits.into_iter()
            .map(|h| {
                let c = &self.chunks[self.by_id[&h.chunk_id]];
                RetrievedContext::from_hit(
                    h,
                    c.doc_id.clone(),
                    c.heading_path.clone(),
                    c.body.clone(),
                )
            })
            .collect()
    }

    /// Runs both searches and fuses them. Fails if the query cannot be embedded.
    pub fn retrieve(&self, query: &str) -> Result<Vec<RetrievedContext>> {
        let pool = self.config.pool_size();
        let (vector_pool, lexical_pool) = par::join(
            self.exec,
            || -> Result<Vec<(String, f64)>> {
                if self.vector.is_empty() {
                    return Ok(Vec::new());
                }
                let q = self.embedder.embed_text(query)?;
                self.vector.search_with(&q, pool, self.exec)
            },
            || self.lexical.search(query, pool),
        );
        Ok(self.attach(fuse(&vector_pool?, &lexical_pool, &self.config)))
    }

    /// Lexical-only retrieval; every context is sourced from BM25.
    pub fn retrieve_lexical_only(&self, query: &str) -> Vec<RetrievedContext> {
        let lexical_pool = self.lexical.search(query, self.config.pool_size());
        let contexts = self.attach(fuse(&[], &lexical_pool, &self.config));
        debug_assert!(contexts
            .iter()
            .all(|c| c.sources.iter().all(|s| *s == Source::Lexical)));
        contexts
    }

    /// Like [`retrieve`](Self::retrieve), but falls back to lexical-only
    /// results when the embedder fails.
    pub fn retrieve_with_fallback(&self, query: &str) -> RetrievalOutcome {
        match self.retrieve(query) {
            Ok(contexts) => RetrievalOutcome {
                contexts,
                fallback_reason: None,
            },
            Err(e) => {
                log::warn!("vector retrieval failed, using lexical only: {e}");
                RetrievalOutcome {
                    contexts: self.retrieve_lexical_only(query),
                    fallback_reason: Some(e.to_string()),
                }
            }
        }
    }
}
