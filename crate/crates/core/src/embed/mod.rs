//! Embedding vectors, embedding providers and the similarity math used for
//! retrieval.

mod cache;
mod hashed;
mod remote;

pub use cache::{CacheRecord, EmbeddingCache};
pub use hashed::{tokenize, HashedEmbedder};
pub use remote::{RemoteEmbedder, RemoteEmbedderOptions};

use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum EmbedError {
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("zero-norm vector has no direction")]
    ZeroVector,
    #[error("embedding must have at least one component")]
    EmptyVector,
    #[error("embedding component {index} is not finite")]
    NonFinite { index: usize },
    #[error("embedding provider unavailable after {retries} retries: {reason}")]
    ProviderUnavailable { reason: String, retries: u32 },
    #[error("invalid embedder config: {0}")]
    InvalidConfig(String),
    #[error("embedding cache error: {0}")]
    Cache(String),
}

/// Fixed-length vector of finite reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, EmbedError> {
        if values.is_empty() {
            return Err(EmbedError::EmptyVector);
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(EmbedError::NonFinite { index });
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &Self) -> Result<f64, EmbedError> {
        check_dims(self, other)?;
        Ok(self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum())
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Unit-length copy. Fails on the zero vector.
    pub fn l2_normalized(&self) -> Result<Self, EmbedError> {
        let n = self.norm();
        if n == 0.0 {
            return Err(EmbedError::ZeroVector);
        }
        Ok(Self(self.0.iter().map(|v| v / n).collect()))
    }

    pub fn scaled(&self, factor: f64) -> Result<Self, EmbedError> {
        Self::new(self.0.iter().map(|v| v * factor).collect())
    }
}

impl TryFrom<Vec<f64>> for EmbeddingVector {
    type Error = EmbedError;

    fn try_from(values: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(values)
    }
}

impl From<EmbeddingVector> for Vec<f64> {
    fn from(v: EmbeddingVector) -> Self {
        v.0
    }
}

fn check_dims(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<(), EmbedError> {
    if a.dim() != b.dim() {
        return Err(EmbedError::DimensionMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    Ok(())
}

/// `(a·b) / (‖a‖‖b‖)`, clamped to `[-1, 1]`.
///
/// A zero vector is an error rather than a similarity of 0, since a silent 0
/// would sit in the middle of a ranking.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbedError> {
    check_dims(a, b)?;
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.0.iter().zip(&b.0) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(EmbedError::ZeroVector);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

/// `‖a − b‖₂`.
pub fn euclidean_distance(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbedError> {
    check_dims(a, b)?;
    Ok(a.0
        .iter()
        .zip(&b.0)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedderKind {
    Remote,
    HashedLocal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    None,
    #[default]
    L2,
}

impl Normalization {
    pub(crate) fn apply(self, v: EmbeddingVector) -> Result<EmbeddingVector, EmbedError> {
        match self {
            Normalization::None => Ok(v),
            Normalization::L2 => v.l2_normalized(),
        }
    }
}

pub const DEFAULT_DIM: usize = 256;
pub const DEFAULT_MAX_CHARS: usize = 24_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedderConfig {
    pub kind: EmbedderKind,
    pub dim: usize,
    #[serde(default)]
    pub model_id: Option<String>,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub normalization: Normalization,
    /// Character budget for remote requests; longer texts lose their tail.
    #[serde(default = "default_max_chars")]
    pub max_chars: usize,
}

fn default_max_chars() -> usize {
    DEFAULT_MAX_CHARS
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self::hashed_local(DEFAULT_DIM)
    }
}

impl EmbedderConfig {
    pub fn hashed_local(dim: usize) -> Self {
        Self {
            kind: EmbedderKind::HashedLocal,
            dim,
            model_id: None,
            endpoint: None,
            normalization: Normalization::L2,
            max_chars: DEFAULT_MAX_CHARS,
        }
    }

    pub fn validate(&self) -> Result<(), EmbedError> {
        if self.dim == 0 {
            return Err(EmbedError::InvalidConfig("dim must be at least 1".into()));
        }
        if self.kind == EmbedderKind::Remote {
            if self.model_id.as_deref().is_none_or(str::is_empty) {
                return Err(EmbedError::InvalidConfig(
                    "remote embedder needs a model id".into(),
                ));
            }
            if self.endpoint.as_deref().is_none_or(str::is_empty) {
                return Err(EmbedError::InvalidConfig(
                    "remote embedder needs an endpoint".into(),
                ));
            }
            if self.max_chars == 0 {
                return Err(EmbedError::InvalidConfig(
                    "max_chars must be at least 1".into(),
                ));
            }
        }
        Ok(())
    }

    /// Instantiates the configured provider. Remote providers use the real
    /// HTTP transport and, when `cache_path` is given, a persistent cache.
    pub fn build(
        &self,
        api_key: Option<String>,
        cache_path: Option<&Path>,
    ) -> Result<Box<dyn Embedder>, EmbedError> {
        self.validate()?;
        match self.kind {
            EmbedderKind::HashedLocal => {
                Ok(Box::new(HashedEmbedder::new(self.dim, self.normalization)?))
            }
            EmbedderKind::Remote => {
                let transport = crate::transport::ReqwestTransport::new()
                    .map_err(|e| EmbedError::InvalidConfig(e.to_string()))?;
                let cache = match cache_path {
                    Some(p) => Some(EmbeddingCache::open(p)?),
                    None => None,
                };
                Ok(Box::new(RemoteEmbedder::new(
                    self.clone(),
                    api_key,
                    Box::new(transport),
                    cache,
                    RemoteEmbedderOptions::default(),
                )?))
            }
        }
    }
}

/// Maps text to a vector of fixed dimension.
pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;

    /// Identifies the provider and its parameters in reports.
    fn describe(&self) -> String;

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError>;
}

/// Embeds `text`, rejecting blank input and checking the output dimension.
pub fn embed_text(text: &str, embedder: &dyn Embedder) -> Result<EmbeddingVector, EmbedError> {
    if text.trim().is_empty() {
        return Err(EmbedError::EmptyText);
    }
    let v = embedder.embed(text)?;
    if v.dim() != embedder.dim() {
        return Err(EmbedError::DimensionMismatch {
            expected: embedder.dim(),
            actual: v.dim(),
        });
    }
    Ok(v)
}
