use super::{EmbedError, Embedder, EmbedderConfig, EmbeddingCache, EmbeddingVector};
use crate::hashing::sha256_hex;
use crate::transport::{with_retries, Backoff, HttpTransport};
use serde_json::{json, Value};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

#[derive(Debug, Clone, Copy)]
pub struct RemoteEmbedderOptions {
    pub max_retries: u32,
    pub timeout: Duration,
    pub backoff: Backoff,
}

impl Default for RemoteEmbedderOptions {
    fn default() -> Self {
        Self {
            max_retries: 3,
            timeout: Duration::from_secs(60),
            backoff: Backoff::default(),
        }
    }
}

/// Embeddings from an OpenAI-compatible `/embeddings` endpoint.
///
/// Request: `{"model": <model_id>, "input": <text>}`. The response vector is
/// read from `data[0].embedding`, or from a top-level `embedding` array.
pub struct RemoteEmbedder {
    config: EmbedderConfig,
    model_id: String,
    endpoint: String,
    api_key: Option<String>,
    transport: Box<dyn HttpTransport>,
    cache: Option<EmbeddingCache>,
    options: RemoteEmbedderOptions,
    truncated: AtomicUsize,
}

impl RemoteEmbedder {
    pub fn new(
        config: EmbedderConfig,
        api_key: Option<String>,
        transport: Box<dyn HttpTransport>,
        cache: Option<EmbeddingCache>,
        options: RemoteEmbedderOptions,
    ) -> Result<Self, EmbedError> {
        config.validate()?;
        let model_id = config.model_id.clone().unwrap_or_default();
        let endpoint = config.endpoint.clone().unwrap_or_default();
        Ok(Self {
            config,
            model_id,
            endpoint,
            api_key,
            transport,
            cache,
            options,
            truncated: AtomicUsize::new(0),
        })
    }

    /// Number of inputs cut down to the character budget so far.
    pub fn truncated_count(&self) -> usize {
        self.truncated.load(Ordering::Relaxed)
    }

    fn truncate<'a>(&self, text: &'a str) -> &'a str {
        match text.char_indices().nth(self.config.max_chars) {
            Some((byte_idx, _)) => {
                self.truncated.fetch_add(1, Ordering::Relaxed);
                log::warn!(
                    "embedding input truncated from {} to {} chars",
                    text.chars().count(),
                    self.config.max_chars
                );
                &text[..byte_idx]
            }
            None => text,
        }
    }

    fn fetch(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        let body = json!({ "model": self.model_id, "input": text });
        let (resp, _retries) = with_retries(self.options.max_retries, self.options.backoff, || {
            self.transport.post_json(
                &self.endpoint,
                self.api_key.as_deref(),
                &body,
                self.options.timeout,
            )
        })
        .map_err(|(e, retries)| EmbedError::ProviderUnavailable {
            reason: e.to_string(),
            retries,
        })?;
        extract_vector(&resp).ok_or_else(|| EmbedError::ProviderUnavailable {
            reason: "response carried no embedding array".into(),
            retries: 0,
        })
    }
}

fn extract_vector(resp: &Value) -> Option<Vec<f64>> {
    let arr = resp
        .pointer("/data/0/embedding")
        .or_else(|| resp.get("embedding"))?
        .as_array()?;
    arr.iter().map(Value::as_f64).collect()
}

impl Embedder for RemoteEmbedder {
    fn dim(&self) -> usize {
        self.config.dim
    }

    fn describe(&self) -> String {
        format!("remote(model={}, dim={})", self.model_id, self.config.dim)
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        if text.trim().is_empty() {
            return Err(EmbedError::EmptyText);
        }
        let text = self.truncate(text);
        let key = sha256_hex(text);
        let raw = match self
            .cache
            .as_ref()
            .and_then(|c| c.get(&self.model_id, &key))
        {
            Some(v) => v,
            None => {
                let values = self.fetch(text)?;
                if values.len() != self.config.dim {
                    return Err(EmbedError::DimensionMismatch {
                        expected: self.config.dim,
                        actual: values.len(),
                    });
                }
                let v = EmbeddingVector::new(values)?;
                if let Some(cache) = &self.cache {
                    cache.put(&self.model_id, &key, v.clone())?;
                }
                v
            }
        };
        self.config.normalization.apply(raw)
    }
}
