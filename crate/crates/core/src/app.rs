//! Wiring from an [`AppConfig`] to a ready [`ChatEngine`]: ingest, index
//! snapshots on disk, provider registry.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::chat::{ChatEngine, TranscriptStore};
use crate::config::AppConfig;
use crate::corpus::{chunk_corpus, load_corpus, read_chunks, write_chunks, Chunk, ChunkPolicy};
use crate::embedding::{Backend, EmbedderConfig};
use crate::error::{CoachError, Result};
use crate::generation::{PromptTemplate, ProviderRegistry};
use crate::lexical::LexicalIndex;
use crate::retriever::Retriever;
use crate::vector::VectorIndex;

const CHUNKS_FILE: &str = "chunks.jsonl";
const LEXICAL_FILE: &str = "lexical.json";
const VECTOR_FILE: &str = "vector.json";
const META_FILE: &str = "meta.json";

/// Recorded next to a snapshot so a changed embedder is caught at load time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexMeta {
    pub chunk_count: usize,
    pub embedding_backend: Backend,
    pub embedding_dim: usize,
    pub embedding_model: Option<String>,
    pub chunking: ChunkPolicy,
}

impl IndexMeta {
    fn new(chunks: usize, embedding: &EmbedderConfig, chunking: &ChunkPolicy) -> Self {
        IndexMeta {
            chunk_count: chunks,
            embedding_backend: embedding.backend,
            embedding_dim: embedding.dim,
            embedding_model: embedding.model_name.clone(),
            chunking: chunking.clone(),
        }
    }
}

/// File layout of one index snapshot directory.
#[derive(Debug, Clone)]
pub struct SnapshotPaths {
    pub dir: PathBuf,
}

impl SnapshotPaths {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        SnapshotPaths { dir: dir.into() }
    }

    pub fn chunks(&self) -> PathBuf {
        self.dir.join(CHUNKS_FILE)
    }

    pub fn lexical(&self) -> PathBuf {
        self.dir.join(LEXICAL_FILE)
    }

    pub fn vector(&self) -> PathBuf {
        self.dir.join(VECTOR_FILE)
    }

    pub fn meta(&self) -> PathBuf {
        self.dir.join(META_FILE)
    }

    pub fn has_index(&self) -> bool {
        self.lexical().is_file() && self.vector().is_file() && self.chunks().is_file()
    }
}

fn manifest(cfg: &AppConfig) -> Result<&Path> {
    cfg.manifest
        .as_deref()
        .ok_or_else(|| CoachError::Config("no corpus manifest configured".into()))
}

/// Loads and chunks the corpus, then writes `chunks.jsonl` under the index dir.
pub fn ingest(cfg: &AppConfig) -> Result<Vec<Chunk>> {
    let corpus = load_corpus(manifest(cfg)?)?;
    let chunks = chunk_corpus(&corpus, &cfg.chunking)?;
    let paths = SnapshotPaths::new(cfg.index_dir());
    fs::create_dir_all(&paths.dir).map_err(|e| CoachError::io(&paths.dir, e))?;
    write_chunks(paths.chunks(), &chunks)?;
    log::info!(
        "ingested {} documents into {} chunks",
        corpus.len(),
        chunks.len()
    );
    Ok(chunks)
}

/// Builds both indexes over `chunks` and saves the snapshot.
pub fn build_index(cfg: &AppConfig, chunks: Vec<Chunk>) -> Result<Retriever> {
    let embedder = cfg.embedding.build()?;
    let paths = SnapshotPaths::new(cfg.index_dir());
    let meta = IndexMeta::new(chunks.len(), &cfg.embedding, &cfg.chunking);
    let retriever = Retriever::build(chunks, embedder, cfg.ensemble.clone(), cfg.bm25)?;

    fs::create_dir_all(&paths.dir).map_err(|e| CoachError::io(&paths.dir, e))?;
    write_chunks(paths.chunks(), retriever.chunks())?;
    retriever.lexical().save(paths.lexical())?;
    retriever.vector().save(paths.vector())?;
    let json =
        serde_json::to_string_pretty(&meta).map_err(|e| CoachError::parse("index meta", e))?;
    fs::write(paths.meta(), json).map_err(|e| CoachError::io(paths.meta(), e))?;
    Ok(retriever)
}

/// Re-chunks when `chunks.jsonl` is missing, then builds the index.
pub fn rebuild(cfg: &AppConfig) -> Result<Retriever> {
    let paths = SnapshotPaths::new(cfg.index_dir());
    let chunks = if paths.chunks().is_file() && cfg.manifest.is_none() {
        read_chunks(paths.chunks())?
    } else {
        ingest(cfg)?
    };
    build_index(cfg, chunks)
}

/// Loads a saved snapshot. `Ok(None)` when none exists yet.
pub fn load_index(cfg: &AppConfig) -> Result<Option<Retriever>> {
    let paths = SnapshotPaths::new(cfg.index_dir());
    if !paths.has_index() {
        return Ok(None);
    }
    if paths.meta().is_file() {
        let raw = fs::read_to_string(paths.meta()).map_err(|e| CoachError::io(paths.meta(), e))?;
        let meta: IndexMeta = serde_json::from_str(&raw)
            .map_err(|e| CoachError::parse(paths.meta().display().to_string(), e))?;
        if meta.embedding_backend != cfg.embedding.backend
            || meta.embedding_dim != cfg.embedding.dim
        {
            return Err(CoachError::Config(format!(
                "index in {} was built with {:?}/{} embeddings but the config asks for {:?}/{}; rebuild it",
                paths.dir.display(),
                meta.embedding_backend,
                meta.embedding_dim,
                cfg.embedding.backend,
                cfg.embedding.dim
            )));
        }
    }
    let chunks = read_chunks(paths.chunks())?;
    let lexical = LexicalIndex::load(paths.lexical())?;
    let vector = VectorIndex::load(paths.vector())?;
    let embedder = cfg.embedding.build()?;
    Retriever::from_parts(chunks, lexical, vector, embedder, cfg.ensemble.clone()).map(Some)
}

pub fn prompt_template(cfg: &AppConfig) -> Result<PromptTemplate> {
    match &cfg.system_prompt {
        Some(p) => PromptTemplate::load(p),
        None => Ok(PromptTemplate::default()),
    }
}

/// Engine with providers, prompt and transcript store from `cfg`.
pub fn build_engine(cfg: &AppConfig, retriever: Option<Arc<Retriever>>) -> Result<ChatEngine> {
    let providers = ProviderRegistry::from_configs(&cfg.effective_providers())?;
    let store = TranscriptStore::open(cfg.sessions_dir())?;
    let engine = ChatEngine::new(providers, prompt_template(cfg)?, store, cfg.chat.clone());
    if let Some(r) = retriever {
        engine.set_retriever(r);
    }
    Ok(engine)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(dir: &Path) -> AppConfig {
        let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data");
        AppConfig {
            data_dir: dir.to_path_buf(),
            manifest: Some(root.join("sample-corpus/manifest.json")),
            system_prompt: Some(root.join("system_prompt.md")),
            embedding: EmbedderConfig::hashed(64),
            ..AppConfig::default()
        }
    }

    #[test]
    fn snapshot_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(dir.path());
        assert!(load_index(&cfg).unwrap().is_none());

        let built = rebuild(&cfg).unwrap();
        let loaded = load_index(&cfg).unwrap().unwrap();
        assert_eq!(built.chunks(), loaded.chunks());
        let q = "How do I run a sprint retrospective with alpha cards?";
        assert_eq!(built.retrieve(q).unwrap(), loaded.retrieve(q).unwrap());
    }

    #[test]
    fn changed_embedder_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = config(dir.path());
        rebuild(&cfg).unwrap();
        cfg.embedding.dim = 32;
        assert!(matches!(load_index(&cfg), Err(CoachError::Config(_))));
    }

    #[test]
    fn missing_manifest_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = AppConfig {
            data_dir: dir.path().to_path_buf(),
            ..AppConfig::default()
        };
        assert!(matches!(ingest(&cfg), Err(CoachError::Config(_))));
    }

    #[test]
    fn engine_uses_mock_provider_by_default() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(dir.path());
        let engine = build_engine(&cfg, Some(Arc::new(rebuild(&cfg).unwrap()))).unwrap();
        assert!(engine.index_ready());
        let s = engine
            .create_session(Default::default(), true, None)
            .unwrap();
        let turn = engine
            .post_message(&s.session_id, "What is an alpha?")
            .unwrap();
        assert!(!turn.contexts_used.is_empty());
    }
}
