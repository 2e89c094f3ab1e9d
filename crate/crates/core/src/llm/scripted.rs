use super::{ChatProvider, Completion, LlmError};
use crate::prompt::PromptSpec;
use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

/// Canned responses keyed by [`PromptSpec::sha256`].
#[derive(Debug)]
pub struct ScriptedProvider {
    responses: HashMap<String, String>,
    default_response: String,
    calls: AtomicUsize,
}

impl ScriptedProvider {
    pub fn new(responses: HashMap<String, String>, default_response: impl Into<String>) -> Self {
        Self {
            responses,
            default_response: default_response.into(),
            calls: AtomicUsize::new(0),
        }
    }

    /// Answers every prompt with `response`.
    pub fn constant(response: impl Into<String>) -> Self {
        Self::new(HashMap::new(), response)
    }

    /// Loads a JSON object `{ "<prompt sha256>": "<response>", ... }`.
    pub fn from_file(path: &Path, default_response: &str) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::InvalidConfig(format!("{}: {e}", path.display())))?;
        let map: HashMap<String, String> = serde_json::from_str(&text)
            .map_err(|e| LlmError::InvalidConfig(format!("{}: {e}", path.display())))?;
        Ok(Self::new(map, default_response))
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

impl ChatProvider for ScriptedProvider {
    fn describe(&self) -> String {
        format!("scripted(entries={})", self.responses.len())
    }

    fn complete(&self, prompt: &PromptSpec) -> Result<Completion, LlmError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let text = self
            .responses
            .get(&prompt.sha256())
            .unwrap_or(&self.default_response);
        Ok(Completion::immediate(text.clone()))
    }

    fn is_deterministic(&self) -> bool {
        true
    }
}
