use super::PromptError;
use crate::hashing::sha256_hex;
use std::collections::BTreeMap;
use std::path::Path;

/// Prompt templates. Placeholders are `{{CODE}}`, `{{CONTEXT}}` and
/// `{{STEPS}}`; substitution is a single pass, so placeholder-like text inside
/// substituted code is never expanded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    pub system: String,
    pub classify: String,
    pub rerank: String,
    pub cot_steps: String,
}

const FILES: [&str; 4] = ["system.txt", "classify.txt", "rerank.txt", "cot_steps.txt"];

impl Default for TemplateSet {
    fn default() -> Self {
        Self::builtin()
    }
}

impl TemplateSet {
    pub fn builtin() -> Self {
        Self {
            system: include_str!("../../templates/system.txt").to_string(),
            classify: include_str!("../../templates/classify.txt").to_string(),
            rerank: include_str!("../../templates/rerank.txt").to_string(),
            cot_steps: include_str!("../../templates/cot_steps.txt").to_string(),
        }
    }

    /// Loads `system.txt`, `classify.txt`, `rerank.txt` and `cot_steps.txt`
    /// from `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, PromptError> {
        let read = |name: &str| {
            std::fs::read_to_string(dir.join(name))
                .map_err(|e| PromptError::Template(format!("{}: {e}", dir.join(name).display())))
        };
        let set = Self {
            system: read(FILES[0])?,
            classify: read(FILES[1])?,
            rerank: read(FILES[2])?,
            cot_steps: read(FILES[3])?,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        for (name, body, required) in [
            (
                "classify.txt",
                &self.classify,
                &["{{CODE}}", "{{CONTEXT}}", "{{STEPS}}"][..],
            ),
            ("rerank.txt", &self.rerank, &["{{CODE}}", "{{CONTEXT}}"][..]),
        ] {
            for ph in required {
                if !body.contains(ph) {
                    return Err(PromptError::Template(format!(
                        "{name} lacks placeholder {ph}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// SHA-256 of each template, keyed by file name.
    pub fn hashes(&self) -> BTreeMap<String, String> {
        [
            (FILES[0], &self.system),
            (FILES[1], &self.classify),
            (FILES[2], &self.rerank),
            (FILES[3], &self.cot_steps),
        ]
        .into_iter()
        .map(|(name, body)| (name.to_string(), sha256_hex(body)))
        .collect()
    }
}

/// Replaces `{{NAME}}` markers using `lookup`; unknown markers stay verbatim.
pub(crate) fn render(template: &str, lookup: impl Fn(&str) -> Option<String>) -> String {
    let mut out = String::with_capacity(template.len() * 2);
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        match after.find("}}") {
            Some(end) => {
                let name = &after[..end];
                match lookup(name) {
                    Some(value) => out.push_str(&value),
                    None => {
                        out.push_str("{{");
                        out.push_str(name);
                        out.push_str("}}");
                    }
                }
                rest = &after[end + 2..];
            }
            None => {
                out.push_str(&rest[start..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}
