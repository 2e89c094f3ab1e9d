use super::{ChatProvider, Completion, LlmError, ProviderConfig};
use crate::prompt::PromptSpec;
use crate::transport::{with_retries, Backoff, HttpTransport, TokenBucket, TransportError};
use serde_json::{json, Value};
use std::time::Instant;

/// OpenAI-compatible chat completion client.
///
/// Sends `[system, user]` messages and returns the first choice's text.
pub struct RemoteChatProvider {
    config: ProviderConfig,
    endpoint: String,
    model_id: String,
    api_key: Option<String>,
    transport: Box<dyn HttpTransport>,
    limiter: Option<TokenBucket>,
    backoff: Backoff,
}

impl RemoteChatProvider {
    pub fn new(
        config: ProviderConfig,
        api_key: Option<String>,
        transport: Box<dyn HttpTransport>,
    ) -> Result<Self, LlmError> {
        config.validate()?;
        let limiter = config
            .requests_per_second
            .map(|rps| TokenBucket::new(rps.ceil().max(1.0) as u32, rps));
        Ok(Self {
            endpoint: config.endpoint.clone().unwrap_or_default(),
            model_id: config.model_id.clone().unwrap_or_default(),
            config,
            api_key,
            transport,
            limiter,
            backoff: Backoff::default(),
        })
    }

    pub fn with_backoff(mut self, backoff: Backoff) -> Self {
        self.backoff = backoff;
        self
    }

    fn request_body(&self, prompt: &PromptSpec) -> Value {
        json!({
            "model": self.model_id,
            "temperature": self.config.temperature,
            "messages": [
                { "role": "system", "content": prompt.system_text },
                { "role": "user", "content": prompt.user_text },
            ],
        })
    }
}

impl ChatProvider for RemoteChatProvider {
    fn describe(&self) -> String {
        format!(
            "remote(model={}, temperature={})",
            self.model_id, self.config.temperature
        )
    }

    fn complete(&self, prompt: &PromptSpec) -> Result<Completion, LlmError> {
        let body = self.request_body(prompt);
        let start = Instant::now();
        let (resp, retries) = with_retries(self.config.max_retries, self.backoff, || {
            if let Some(l) = &self.limiter {
                l.acquire();
            }
            self.transport.post_json(
                &self.endpoint,
                self.api_key.as_deref(),
                &body,
                self.config.timeout(),
            )
        })
        .map_err(|(e, retries)| match e {
            TransportError::Timeout => LlmError::Timeout { retries },
            other => LlmError::ProviderUnavailable {
                reason: other.to_string(),
                retries,
            },
        })?;
        let latency = start.elapsed();
        let text = resp
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| LlmError::ProviderUnavailable {
                reason: "response has no choices[0].message.content".into(),
                retries,
            })?
            .to_string();
        let prompt_tokens = resp.pointer("/usage/prompt_tokens").and_then(Value::as_u64);
        let completion_tokens = resp
            .pointer("/usage/completion_tokens")
            .and_then(Value::as_u64);
        log::info!(
            "chat completion model={} latency_ms={} retries={} prompt_tokens={:?} completion_tokens={:?}",
            self.model_id,
            latency.as_millis(),
            retries,
            prompt_tokens,
            completion_tokens
        );
        Ok(Completion {
            text,
            retries_used: retries,
            latency,
            prompt_tokens,
            completion_tokens,
        })
    }

    fn is_deterministic(&self) -> bool {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::ProviderKind;
    use crate::prompt::{build_classification_prompt, TemplateSet};
    use crate::transport::stub::StubTransport;
    use std::sync::Arc;
    use std::time::Duration;

    struct Shared(Arc<StubTransport>);

    impl HttpTransport for Shared {
        fn post_json(
            &self,
            u: &str,
            b: Option<&str>,
            body: &Value,
            t: Duration,
        ) -> Result<Value, TransportError> {
            self.0.post_json(u, b, body, t)
        }
    }

    fn provider(stub: Arc<StubTransport>) -> RemoteChatProvider {
        let mut c = ProviderConfig::new(ProviderKind::Remote);
        c.endpoint = Some("http://localhost:9/v1/chat/completions".into());
        c.model_id = Some("gpt-test".into());
        RemoteChatProvider::new(c, Some("key".into()), Box::new(Shared(stub)))
            .unwrap()
            .with_backoff(Backoff::none())
    }

    fn prompt() -> PromptSpec {
        build_classification_prompt(&TemplateSet::builtin(), "int x;", &[], false).unwrap()
    }

    #[test]
    fn sends_system_and_user_messages() {
        let stub = Arc::new(StubTransport::new(vec![Ok(json!({
            "choices": [{"message": {"role": "assistant", "content": "VERDICT: 1"}}],
            "usage": {"prompt_tokens": 120, "completion_tokens": 4}
        }))]));
        let p = provider(stub.clone());
        let out = p.complete(&prompt()).unwrap();
        assert_eq!(out.text, "VERDICT: 1");
        assert_eq!(out.prompt_tokens, Some(120));
        let body = stub.bodies.lock().unwrap()[0].clone();
        assert_eq!(body["model"], "gpt-test");
        assert_eq!(body["temperature"], 0.0);
        assert_eq!(body["messages"][0]["role"], "system");
        assert_eq!(body["messages"][1]["content"], prompt().user_text);
    }

    #[test]
    fn retries_then_reports_unavailable() {
        let stub = Arc::new(StubTransport::new(vec![
            Err(TransportError::Transient("HTTP 429".into())),
            Err(TransportError::Transient("HTTP 500".into())),
            Err(TransportError::Transient("HTTP 502".into())),
            Err(TransportError::Transient("HTTP 503".into())),
        ]));
        let err = provider(stub.clone()).complete(&prompt()).unwrap_err();
        assert!(matches!(
            err,
            LlmError::ProviderUnavailable { retries: 3, .. }
        ));
        assert_eq!(stub.calls(), 4);
    }

    #[test]
    fn timeout_surfaces_as_timeout() {
        let stub = Arc::new(StubTransport::new(vec![Err(TransportError::Timeout); 4]));
        assert!(matches!(
            provider(stub).complete(&prompt()),
            Err(LlmError::Timeout { retries: 3 })
        ));
    }

    #[test]
    fn retry_count_reported() {
        let stub = Arc::new(StubTransport::new(vec![
            Err(TransportError::Timeout),
            Ok(json!({"choices": [{"message": {"content": "VERDICT: 0"}}]})),
        ]));
        assert_eq!(provider(stub).complete(&prompt()).unwrap().retries_used, 1);
    }
}
