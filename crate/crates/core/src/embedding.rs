//! Text-to-vector backends.
//!
//! Every vector leaving an [`Embedder`] is L2-normalized, so cosine similarity
//! downstream is a plain dot product.

use std::sync::{Arc, OnceLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{CoachError, Result};
use crate::par::{self, Execution, InFlightLimit};
use crate::text::tokenize;

pub const DEFAULT_DIM: usize = 384;

const NORM_TOLERANCE: f64 = 1e-6;

/// Fixed-length real vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(CoachError::InvalidInput(
                "embedding vector has no components".into(),
            ));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(CoachError::InvalidInput(format!(
                "non-finite component at index {i}"
            )));
        }
        Ok(EmbeddingVector { values })
    }

    /// Builds a unit vector from raw values.
    pub fn normalized(values: Vec<f64>) -> Result<Self> {
        let mut v = Self::new(values)?;
        let norm = v.norm();
        if norm == 0.0 {
            return Err(CoachError::InvalidInput(
                "cannot normalize a zero vector".into(),
            ));
        }
        v.values.iter_mut().for_each(|x| *x /= norm);
        Ok(v)
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_unit(&self) -> bool {
        (self.norm() - 1.0).abs() <= NORM_TOLERANCE
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Backend {
    External,
    #[default]
    HashedReference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedderConfig {
    pub backend: Backend,
    pub dim: usize,
    /// Model server URL (External only).
    pub endpoint: Option<String>,
    /// Informational; identifies the model behind `endpoint`.
    pub model_name: Option<String>,
    pub timeout_secs: u64,
    pub max_in_flight: usize,
    /// Texts per HTTP request.
    pub batch_size: usize,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        EmbedderConfig {
            backend: Backend::HashedReference,
            dim: DEFAULT_DIM,
            endpoint: None,
            model_name: None,
            timeout_secs: 30,
            max_in_flight: 4,
            batch_size: 64,
        }
    }
}

impl EmbedderConfig {
    pub fn hashed(dim: usize) -> Self {
        EmbedderConfig {
            dim,
            ..Default::default()
        }
    }

    pub fn external(
        endpoint: impl Into<String>,
        model_name: impl Into<String>,
        dim: usize,
    ) -> Self {
        EmbedderConfig {
            backend: Backend::External,
            dim,
            endpoint: Some(endpoint.into()),
            model_name: Some(model_name.into()),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(CoachError::Config("embedding dim must be positive".into()));
        }
        if self.backend == Backend::External && self.endpoint.as_deref().is_none_or(str::is_empty) {
            return Err(CoachError::Config(
                "external embedder requires an endpoint".into(),
            ));
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Arc<dyn Embedder>> {
        self.validate()?;
        Ok(match self.backend {
            Backend::HashedReference => Arc::new(HashedEmbedder::new(self.dim)),
            Backend::External => Arc::new(ExternalEmbedder::new(self)?),
        })
    }
}

/// A text-to-vector backend. Implementations must be pure per configuration.
pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;

    fn embed_text(&self, text: &str) -> Result<EmbeddingVector>;

    /// Element `i` equals `embed_text(texts[i])`; any failure aborts the batch.
    fn embed_batch(&self, texts: &[String], exec: Execution) -> Result<Vec<EmbeddingVector>> {
        par::try_map(exec, texts, |t| self.embed_text(t))
    }
}

fn check_text(text: &str) -> Result<()> {
    if text.trim().is_empty() {
        return Err(CoachError::InvalidInput("cannot embed empty text".into()));
    }
    Ok(())
}

/// Embeds one text with a freshly built backend.
pub fn embed_text(text: &str, config: &EmbedderConfig) -> Result<EmbeddingVector> {
    config.build()?.embed_text(text)
}

pub fn embed_batch(texts: &[String], config: &EmbedderConfig) -> Result<Vec<EmbeddingVector>> {
    config.build()?.embed_batch(texts, Execution::default())
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
const SECOND_BASIS: u64 = FNV_OFFSET ^ 0x9e37_79b9_7f4a_7c15;

fn fnv1a64(bytes: &[u8], basis: u64) -> u64 {
    bytes
        .iter()
        .fold(basis, |h, b| (h ^ u64::from(*b)).wrapping_mul(FNV_PRIME))
}

fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Bucket index hash, stable across platforms and releases.
pub fn bucket_hash(token: &str) -> u64 {
    splitmix64(fnv1a64(token.as_bytes(), FNV_OFFSET))
}

/// Sign hash, independent of [`bucket_hash`].
pub fn sign_hash(token: &str) -> u64 {
    splitmix64(fnv1a64(token.as_bytes(), SECOND_BASIS))
}

/// Deterministic feature-hashing embedder used by tests and offline runs.
///
/// Each token adds `+1` (even sign hash) or `-1` (odd) at
/// `bucket_hash(token) mod dim`; the sum is L2-normalized. This is a
/// bag-of-words vector, so token order does not matter.
#[derive(Debug, Clone)]
pub struct HashedEmbedder {
    dim: usize,
}

impl HashedEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "dim must be positive");
        HashedEmbedder { dim }
    }
}

impl Embedder for HashedEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_text(&self, text: &str) -> Result<EmbeddingVector> {
        check_text(text)?;
        let mut acc = vec![0.0f64; self.dim];
        for token in tokenize(text) {
            let idx = (bucket_hash(&token) % self.dim as u64) as usize;
            acc[idx] += if sign_hash(&token) % 2 == 0 {
                1.0
            } else {
                -1.0
            };
        }
        EmbeddingVector::normalized(acc).map_err(|_| {
            CoachError::InvalidInput(format!(
                "text has no embeddable tokens: {:?}",
                truncate(text, 40)
            ))
        })
    }
}

fn truncate(s: &str, n: usize) -> String {
    s.chars().take(n).collect()
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

/// Client for a model server speaking `POST {"texts": [...]} -> {"vectors": [[...]]}`.
pub struct ExternalEmbedder {
    endpoint: String,
    dim: usize,
    batch_size: usize,
    timeout: Duration,
    limit: InFlightLimit,
    // built lazily so the blocking client never lives on an async executor thread
    client: OnceLock<reqwest::blocking::Client>,
}

impl ExternalEmbedder {
    pub fn new(config: &EmbedderConfig) -> Result<Self> {
        config.validate()?;
        Ok(ExternalEmbedder {
            endpoint: config.endpoint.clone().unwrap_or_default(),
            dim: config.dim,
            batch_size: config.batch_size.max(1),
            timeout: Duration::from_secs(config.timeout_secs.max(1)),
            limit: InFlightLimit::new(config.max_in_flight),
            client: OnceLock::new(),
        })
    }

    fn client(&self) -> Result<&reqwest::blocking::Client> {
        if let Some(c) = self.client.get() {
            return Ok(c);
        }
        let built = reqwest::blocking::Client::builder()
            .timeout(self.timeout)
            .build()
            .map_err(|e| CoachError::Config(format!("http client: {e}")))?;
        Ok(self.client.get_or_init(|| built))
    }

    fn post(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        let client = self.client()?;
        let _slot = self.limit.acquire();
        let resp = client
            .post(&self.endpoint)
            .json(&EmbedRequest { texts })
            .send()
            .map_err(|e| CoachError::Embedding {
                message: format!("request to {} failed: {e}", self.endpoint),
                retryable: true,
            })?;
        let status = resp.status();
        if !status.is_success() {
            let body = resp.text().unwrap_or_default();
            return Err(CoachError::Embedding {
                message: format!(
                    "embedding server returned {status}: {}",
                    truncate(&body, 200)
                ),
                retryable: status.is_server_error(),
            });
        }
        let parsed: EmbedResponse = resp.json().map_err(|e| CoachError::Embedding {
            message: format!("malformed embedding response: {e}"),
            retryable: false,
        })?;
        if parsed.vectors.len() != texts.len() {
            return Err(CoachError::Embedding {
                message: format!(
                    "expected {} vectors, got {}",
                    texts.len(),
                    parsed.vectors.len()
                ),
                retryable: false,
            });
        }
        parsed
            .vectors
            .into_iter()
            .map(|v| {
                if v.len() != self.dim {
                    return Err(CoachError::DimensionMismatch {
                        expected: self.dim,
                        actual: v.len(),
                    });
                }
                EmbeddingVector::normalized(v)
            })
            .collect()
    }
}

impl Embedder for ExternalEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_text(&self, text: &str) -> Result<EmbeddingVector> {
        check_text(text)?;
        let mut out = self.post(&[text.to_string()])?;
        Ok(out.remove(0))
    }

    fn embed_batch(&self, texts: &[String], exec: Execution) -> Result<Vec<EmbeddingVector>> {
        for t in texts {
            check_text(t)?;
        }
        let batches: Vec<&[String]> = texts.chunks(self.batch_size).collect();
        let results = par::try_map(exec, &batches, |b| self.post(b))?;
        Ok(results.into_iter().flatten().collect())
    }
}
