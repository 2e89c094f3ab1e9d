//! Classification and rerank prompts.
//!
//! Classification prompts carry the target function in a fenced block, an
//! optional CONTEXT section describing a retrieved vulnerable example, optional
//! reasoning steps, and end with the instruction to finish on `VERDICT: 0` or
//! `VERDICT: 1`. Rerank prompts list up to five numbered candidates and end
//! with the instruction to finish on `CHOICE: <n>`.

mod templates;

pub use templates::TemplateSet;

use crate::hashing::sha256_hex;
use crate::vstore::KnowledgeEntry;
use serde::{Deserialize, Serialize};
use std::fmt::Write;
use templates::render;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("target code is empty")]
    EmptyCode,
    #[error("rerank needs at least one candidate")]
    EmptyCandidates,
    #[error("rerank accepts at most {max} candidates, got {got}")]
    TooManyCandidates { got: usize, max: usize },
    #[error("template error: {0}")]
    Template(String),
}

pub const MAX_RERANK_CANDIDATES: usize = 5;

pub const CONTEXT_BEGIN: &str = "=== CONTEXT";
pub const CONTEXT_END: &str = "=== END CONTEXT ===";

/// Appended on the single retry after an unparsable verdict.
pub const VERDICT_REMINDER: &str = "Answer with VERDICT: 0 or VERDICT: 1 only.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    Classification,
    Rerank,
}

/// A knowledge entry together with its retrieval score.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredEntry {
    pub entry: KnowledgeEntry,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptSpec {
    pub kind: PromptKind,
    pub system_text: String,
    pub user_text: String,
    pub cot_enabled: bool,
    /// Entries shown in the CONTEXT section (classification prompts).
    pub context: Vec<ScoredEntry>,
    /// Numbered candidates (rerank prompts).
    pub candidates: Vec<ScoredEntry>,
}

impl PromptSpec {
    pub fn context_entry(&self) -> Option<&KnowledgeEntry> {
        self.context.first().map(|c| &c.entry)
    }

    /// Highest retrieval score among the context entries.
    pub fn max_context_score(&self) -> Option<f64> {
        self.context.iter().map(|c| c.score).reduce(f64::max)
    }

    /// Key used by scripted providers: SHA-256 of
    /// `system_text + "\n" + user_text`.
    pub fn sha256(&self) -> String {
        sha256_hex(format!("{}\n{}", self.system_text, self.user_text))
    }

    /// Copy with the verdict reminder appended as a final paragraph.
    pub fn with_verdict_reminder(&self) -> Self {
        Self {
            user_text: format!("{}\n\n{VERDICT_REMINDER}", self.user_text),
            ..self.clone()
        }
    }
}

/// Fenced code block whose fence is longer than any backtick run in `code`,
/// so the code is carried verbatim.
pub fn fenced(code: &str) -> String {
    let longest = code.split(|c| c != '`').map(str::len).max().unwrap_or(0);
    let fence = "`".repeat(longest.max(2) + 1);
    let mut out = format!("{fence}c\n{code}");
    if !code.ends_with('\n') {
        out.push('\n');
    }
    out.push_str(&fence);
    out
}

fn describe_entry(out: &mut String, item: &ScoredEntry) {
    let e = &item.entry;
    let _ = writeln!(out, "Entry: {}", e.id);
    let _ = writeln!(out, "CWE: {}", e.cwe_id.as_deref().unwrap_or("unknown"));
    let _ = writeln!(out, "Name: {}", e.vuln_name.as_deref().unwrap_or("unknown"));
    let _ = writeln!(
        out,
        "Description: {}",
        e.description
            .as_deref()
            .unwrap_or("none")
            .replace('\n', " ")
    );
    let _ = writeln!(out, "Similarity: {:.6}", item.score);
    out.push_str(&fenced(&e.code));
    out.push('\n');
}

fn context_section(context: &[ScoredEntry]) -> String {
    let mut out = String::new();
    let n = context.len();
    for (i, item) in context.iter().enumerate() {
        out.push('\n');
        if n == 1 {
            let _ = writeln!(out, "{CONTEXT_BEGIN}: known vulnerable example ===");
        } else {
            let _ = writeln!(
                out,
                "{CONTEXT_BEGIN} {} of {n}: known vulnerable example ===",
                i + 1
            );
        }
        describe_entry(&mut out, item);
        let _ = writeln!(out, "{CONTEXT_END}");
    }
    out
}

/// Builds a classification prompt with the given context entries (usually
/// zero or one) and optional reasoning steps.
pub fn build_classification_prompt(
    templates: &TemplateSet,
    code: &str,
    context: &[ScoredEntry],
    cot: bool,
) -> Result<PromptSpec, PromptError> {
    if code.trim().is_empty() {
        return Err(PromptError::EmptyCode);
    }
    let code_block = fenced(code);
    let ctx = context_section(context);
    let steps = if cot {
        templates.cot_steps.clone()
    } else {
        String::new()
    };
    let user_text = render(&templates.classify, |name| match name {
        "CODE" => Some(code_block.clone()),
        "CONTEXT" => Some(ctx.clone()),
        "STEPS" => Some(steps.clone()),
        _ => None,
    });
    Ok(PromptSpec {
        kind: PromptKind::Classification,
        system_text: templates.system.trim_end().to_string(),
        user_text: user_text.trim_end().to_string(),
        cot_enabled: cot,
        context: context.to_vec(),
        candidates: Vec::new(),
    })
}

/// Builds the prompt asking the model to choose the most relevant of
/// `candidates`, numbered from 1 in the given order.
pub fn build_rerank_prompt(
    templates: &TemplateSet,
    code: &str,
    candidates: &[ScoredEntry],
) -> Result<PromptSpec, PromptError> {
    if code.trim().is_empty() {
        return Err(PromptError::EmptyCode);
    }
    if candidates.is_empty() {
        return Err(PromptError::EmptyCandidates);
    }
    if candidates.len() > MAX_RERANK_CANDIDATES {
        return Err(PromptError::TooManyCandidates {
            got: candidates.len(),
            max: MAX_RERANK_CANDIDATES,
        });
    }
    let mut listing = String::new();
    for (i, c) in candidates.iter().enumerate() {
        listing.push('\n');
        let _ = writeln!(listing, "=== CANDIDATE {} ===", i + 1);
        describe_entry(&mut listing, c);
    }
    let code_block = fenced(code);
    let user_text = render(&templates.rerank, |name| match name {
        "CODE" => Some(code_block.clone()),
        "CONTEXT" => Some(listing.clone()),
        _ => None,
    });
    Ok(PromptSpec {
        kind: PromptKind::Rerank,
        system_text: templates.system.trim_end().to_string(),
        user_text: user_text.trim_end().to_string(),
        cot_enabled: false,
        context: Vec::new(),
        candidates: candidates.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::EmbeddingVector;

    const CODE: &str = "void f(char *s) {\n    char buf[8];\n    strcpy(buf, s);\n}";

    fn scored(id: &str, cwe: &str, score: f64) -> ScoredEntry {
        ScoredEntry {
            entry: KnowledgeEntry {
                id: id.into(),
                cwe_id: Some(cwe.into()),
                vuln_name: Some("Overflow".into()),
                description: Some("copies without bounds".into()),
                code: format!("void {id}(char *p) {{ char b[2]; strcpy(b, p); }}"),
                embedding: EmbeddingVector::new(vec![1.0]).unwrap(),
            },
            score,
        }
    }

    fn section<'a>(text: &'a str, begin: &str, end: &str) -> &'a str {
        let s = text.find(begin).expect("begin marker");
        let e = s + text[s..].find(end).expect("end marker");
        &text[s..e]
    }

    #[test]
    fn base_prompt_has_code_and_verdict_instruction_only() {
        let t = TemplateSet::builtin();
        let p = build_classification_prompt(&t, CODE, &[], false).unwrap();
        assert!(p.user_text.contains(&fenced(CODE)));
        assert!(p.user_text.contains(CODE));
        assert!(p.user_text.ends_with("`VERDICT: 1` or `VERDICT: 0`."));
        assert!(!p.user_text.to_lowercase().contains("step"));
        assert!(!p.user_text.contains(CONTEXT_BEGIN));
        assert!(p.context_entry().is_none());
    }

    #[test]
    fn cot_prompt_adds_reasoning_steps() {
        let t = TemplateSet::builtin();
        let p = build_classification_prompt(&t, CODE, &[], true).unwrap();
        assert!(p.user_text.contains("step by step"));
        for step in [
            "Identify the inputs",
            "Trace dangerous operations",
            "Check guards",
            "Conclude",
        ] {
            assert!(p.user_text.contains(step), "missing {step}");
        }
        assert!(p.user_text.ends_with("`VERDICT: 1` or `VERDICT: 0`."));
    }

    #[test]
    fn context_section_carries_metadata() {
        let t = TemplateSet::builtin();
        let ctx = [scored("kb-1", "CWE-119", 0.8125)];
        let p = build_classification_prompt(&t, CODE, &ctx, false).unwrap();
        let sec = section(&p.user_text, CONTEXT_BEGIN, CONTEXT_END);
        assert!(sec.contains("CWE-119"));
        assert!(sec.contains("Overflow"));
        assert!(sec.contains("copies without bounds"));
        assert!(sec.contains("Similarity: 0.812500"));
        assert!(sec.contains("strcpy(b, p)"));
        assert_eq!(p.context_entry().unwrap().id, "kb-1");
    }

    #[test]
    fn empty_code_rejected() {
        let t = TemplateSet::builtin();
        assert_eq!(
            build_classification_prompt(&t, "  \n", &[], true),
            Err(PromptError::EmptyCode)
        );
    }

    #[test]
    fn deterministic() {
        let t = TemplateSet::builtin();
        let ctx = [scored("a", "CWE-20", 0.5)];
        let a = build_classification_prompt(&t, CODE, &ctx, true).unwrap();
        let b = build_classification_prompt(&t, CODE, &ctx, true).unwrap();
        assert_eq!(a.user_text, b.user_text);
        assert_eq!(a.sha256(), b.sha256());
    }

    #[test]
    fn code_with_placeholders_and_fences_is_verbatim() {
        let t = TemplateSet::builtin();
        let code = "/* {{CONTEXT}} ``` VERDICT: 1 */\nint x;\n";
        let p = build_classification_prompt(&t, code, &[], false).unwrap();
        assert!(p.user_text.contains(code));
        assert!(p.user_text.contains("````c\n"));
    }

    #[test]
    fn rerank_lists_numbered_candidates() {
        let t = TemplateSet::builtin();
        let cands: Vec<_> = (1..=5)
            .map(|i| scored(&format!("kb-{i}"), "CWE-787", 1.0 / f64::from(i)))
            .collect();
        let p = build_rerank_prompt(&t, CODE, &cands).unwrap();
        assert_eq!(p.user_text.matches("=== CANDIDATE ").count(), 5);
        for i in 1..=5 {
            assert!(p
                .user_text
                .contains(&format!("=== CANDIDATE {i} ===\nEntry: kb-{i}\n")));
        }
        assert!(p.user_text.ends_with("number of the selected candidate."));
        assert_eq!(p.kind, PromptKind::Rerank);
    }

    #[test]
    fn rerank_permutation_permutes_sections() {
        let t = TemplateSet::builtin();
        let cands: Vec<_> = (1..=4)
            .map(|i| scored(&format!("kb-{i}"), "CWE-787", 0.1 * f64::from(i)))
            .collect();
        let mut rev = cands.clone();
        rev.reverse();
        let extract = |p: &PromptSpec| -> Vec<String> {
            p.user_text
                .split("=== CANDIDATE ")
                .skip(1)
                .map(|s| {
                    let body = s.split_once(" ===\n").unwrap().1;
                    body.split("\nThe last line")
                        .next()
                        .unwrap()
                        .trim_end()
                        .to_string()
                })
                .collect()
        };
        let a = extract(&build_rerank_prompt(&t, CODE, &cands).unwrap());
        let mut b = extract(&build_rerank_prompt(&t, CODE, &rev).unwrap());
        b.reverse();
        assert_eq!(a, b);
    }

    #[test]
    fn rerank_bounds() {
        let t = TemplateSet::builtin();
        assert_eq!(
            build_rerank_prompt(&t, CODE, &[]),
            Err(PromptError::EmptyCandidates)
        );
        let six: Vec<_> = (0..6)
            .map(|i| scored(&i.to_string(), "CWE-1", 0.1))
            .collect();
        assert!(matches!(
            build_rerank_prompt(&t, CODE, &six),
            Err(PromptError::TooManyCandidates { got: 6, .. })
        ));
        assert!(build_rerank_prompt(&t, CODE, &six[..1]).is_ok());
    }

    #[test]
    fn reminder_keeps_verdict_instruction_last() {
        let t = TemplateSet::builtin();
        let p = build_classification_prompt(&t, CODE, &[], false)
            .unwrap()
            .with_verdict_reminder();
        assert!(p.user_text.ends_with(VERDICT_REMINDER));
    }
}
