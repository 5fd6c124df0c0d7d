//! Core library for the Essence Coach: a retrieval-augmented chatbot over a
//! curated Markdown corpus about the Essence standard and software practices.
//!
//! The pipeline is split into small modules:
//!
//! * [`corpus`] loads the manifest and splits documents into heading-delimited chunks.
//! * [`embedding`] turns text into unit-norm vectors (external model server or a
//!   deterministic hashed reference embedder).
//! * [`lexical`] and [`vector`] are the two retrieval halves (BM25 and exact cosine).
//! * [`ensemble`] fuses both result lists into at most `2 * k_each` contexts.
//! * [`generation`] assembles the augmented prompt and talks to chat-completion providers.
//! * [`chat`] holds sessions, transcripts and the message pipeline.
//! * [`app`] wires a config file to snapshots on disk and a ready chat engine.
//! * [`evaluation`] implements retrieval metrics, semantic scoring, human-score
//!   aggregation and the experiment runner.
//!
//! Data-parallel loops go through [`par`], which uses rayon when the `parallel`
//! feature is enabled and falls back to plain iteration otherwise.

pub mod app;
pub mod chat;
pub mod config;
pub mod corpus;
pub mod embedding;
pub mod ensemble;
pub mod error;
pub mod evaluation;
pub mod generation;
pub mod lexical;
pub mod par;
pub mod retriever;
pub mod text;
pub mod vector;

pub use corpus::{Chunk, ChunkPolicy, Corpus, DocumentMeta};
pub use embedding::{EmbedderConfig, EmbeddingVector};
pub use ensemble::{EnsembleConfig, RetrievedContext, Source};
pub use error::{CoachError, Result};
pub use par::Execution;
pub use retriever::Retriever;
