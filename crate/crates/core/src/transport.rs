//! HTTP JSON transport shared by the remote embedder and the remote chat
//! provider, plus the retry and rate-limit helpers wrapped around it.

use serde_json::Value;
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransportError {
    /// Connection failures, 429 and 5xx responses. Worth retrying.
    #[error("transient transport failure: {0}")]
    Transient(String),
    #[error("request timed out")]
    Timeout,
    /// 4xx other than 429, malformed bodies.
    #[error("transport failure: {0}")]
    Fatal(String),
}

impl TransportError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, TransportError::Transient(_) | TransportError::Timeout)
    }
}

/// POST a JSON body and return the decoded JSON response.
pub trait HttpTransport: Send + Sync {
    fn post_json(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &Value,
        timeout: Duration,
    ) -> Result<Value, TransportError>;
}

/// Blocking `reqwest` transport.
pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    pub fn new() -> Result<Self, TransportError> {
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| TransportError::Fatal(e.to_string()))?;
        Ok(Self { client })
    }
}

impl HttpTransport for ReqwestTransport {
    fn post_json(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &Value,
        timeout: Duration,
    ) -> Result<Value, TransportError> {
        let mut req = self.client.post(url).timeout(timeout).json(body);
        if let Some(token) = bearer {
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                TransportError::Timeout
            } else {
                TransportError::Transient(e.to_string())
            }
        })?;
        let status = resp.status();
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(TransportError::Transient(format!("HTTP {status}")));
        }
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            return Err(TransportError::Fatal(format!("HTTP {status}: {text}")));
        }
        resp.json::<Value>()
            .map_err(|e| TransportError::Fatal(format!("invalid JSON body: {e}")))
    }
}

/// Exponential backoff schedule: `base * 2^attempt`, capped.
#[derive(Debug, Clone, Copy)]
pub struct Backoff {
    pub base: Duration,
    pub cap: Duration,
}

impl Default for Backoff {
    fn default() -> Self {
        Self {
            base: Duration::from_millis(500),
            cap: Duration::from_secs(30),
        }
    }
}

impl Backoff {
    pub fn none() -> Self {
        Self {
            base: Duration::ZERO,
            cap: Duration::ZERO,
        }
    }

    pub fn delay(&self, attempt: u32) -> Duration {
        let factor = 1u32.checked_shl(attempt.min(16)).unwrap_or(u32::MAX);
        self.base.saturating_mul(factor).min(self.cap)
    }
}

/// Runs `op` until it succeeds, fails with a non-retryable error, or
/// `max_retries` retries have been spent. Returns the value and the number of
/// retries used.
pub fn with_retries<T>(
    max_retries: u32,
    backoff: Backoff,
    mut op: impl FnMut() -> Result<T, TransportError>,
) -> Result<(T, u32), (TransportError, u32)> {
    let mut attempt = 0;
    loop {
        match op() {
            Ok(v) => return Ok((v, attempt)),
            Err(e) if e.is_retryable() && attempt < max_retries => {
                let delay = backoff.delay(attempt);
                log::warn!(
                    "retrying after {e} (attempt {}, sleeping {delay:?})",
                    attempt + 1
                );
                thread::sleep(delay);
                attempt += 1;
            }
            Err(e) => return Err((e, attempt)),
        }
    }
}

/// Blocking token bucket. `acquire` sleeps until a token is available.
pub struct TokenBucket {
    capacity: f64,
    refill_per_sec: f64,
    state: Mutex<(f64, Instant)>,
}

impl TokenBucket {
    pub fn new(capacity: u32, refill_per_sec: f64) -> Self {
        let capacity = f64::from(capacity.max(1));
        Self {
            capacity,
            refill_per_sec: refill_per_sec.max(f64::MIN_POSITIVE),
            state: Mutex::new((capacity, Instant::now())),
        }
    }

    pub fn acquire(&self) {
        loop {
            let wait = {
                let mut guard = self.state.lock().unwrap_or_else(|p| p.into_inner());
                let (tokens, last) = &mut *guard;
                let now = Instant::now();
                *tokens = (*tokens + now.duration_since(*last).as_secs_f64() * self.refill_per_sec)
                    .min(self.capacity);
                *last = now;
                if *tokens >= 1.0 {
                    *tokens -= 1.0;
                    return;
                }
                Duration::from_secs_f64((1.0 - *tokens) / self.refill_per_sec)
            };
            thread::sleep(wait);
        }
    }
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_doubles_and_caps() {
        let b = Backoff {
            base: Duration::from_millis(100),
            cap: Duration::from_millis(350),
        };
        assert_eq!(b.delay(0), Duration::from_millis(100));
        assert_eq!(b.delay(1), Duration::from_millis(200));
        assert_eq!(b.delay(2), Duration::from_millis(350));
        assert_eq!(b.delay(40), Duration::from_millis(350));
    }

    #[test]
    fn retries_transient_then_succeeds() {
        let mut n = 0;
        let out = with_retries(3, Backoff::none(), || {
            n += 1;
            if n < 3 {
                Err(TransportError::Transient("503".into()))
            } else {
                Ok(n)
            }
        });
        assert_eq!(out, Ok((3, 2)));
    }

    #[test]
    fn gives_up_after_max_retries() {
        let mut n = 0;
        let out: Result<((), u32), _> = with_retries(2, Backoff::none(), || {
            n += 1;
            Err(TransportError::Timeout)
        });
        assert_eq!(out, Err((TransportError::Timeout, 2)));
        assert_eq!(n, 3);
    }

    #[test]
    fn fatal_is_not_retried() {
        let mut n = 0;
        let out: Result<((), u32), _> = with_retries(5, Backoff::none(), || {
            n += 1;
            Err(TransportError::Fatal("400".into()))
        });
        assert!(out.is_err());
        assert_eq!(n, 1);
    }

    #[test]
    fn token_bucket_allows_burst_up_to_capacity() {
        let bucket = TokenBucket::new(3, 1000.0);
        let start = Instant::now();
        for _ in 0..3 {
            bucket.acquire();
        }
        assert!(start.elapsed() < Duration::from_millis(50));
    }
}
