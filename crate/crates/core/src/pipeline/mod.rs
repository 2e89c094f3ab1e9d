//! The detection workflow: embed the target, retrieve the top-k knowledge
//! entries, pick one, build the (optionally chain-of-thought) prompt and
//! classify. Also batch experiments and the RAG/CoT ablation grid.

mod journal;
mod report;

pub use journal::Journal;
pub use report::{AblationCell, AblationReport, ExperimentMeta, ExperimentReport, ABLATION_CELLS};

use crate::corpus::CodeSample;
use crate::embed::{embed_text, EmbedError, Embedder};
use crate::llm::{parse_choice, parse_verdict, ChatProvider, LlmError, ParseStatus};
use crate::metrics::{compute_metrics, confusion, ConfusionCounts, MetricsError};
use crate::prompt::{
    build_classification_prompt, build_rerank_prompt, PromptError, ScoredEntry, TemplateSet,
};
use crate::vstore::{RetrievalHit, StoreError, VectorStore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::path::Path;
use std::time::Instant;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("retrieval is enabled but the knowledge base is empty")]
    EmptyStore,
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("duplicate sample id {0:?} in test set")]
    DuplicateSample(String),
    #[error("invalid pipeline config: {0}")]
    InvalidConfig(String),
    #[error("sample {id}: {source}")]
    Sample {
        id: String,
        #[source]
        source: Box<PipelineError>,
    },
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Provider(#[from] LlmError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("journal error: {0}")]
    Journal(String),
}

impl PipelineError {
    /// Failure of a remote embedder or chat provider (as opposed to bad
    /// input or configuration).
    pub fn is_provider_failure(&self) -> bool {
        match self {
            PipelineError::Provider(e) => e.is_provider_failure(),
            PipelineError::Embed(EmbedError::ProviderUnavailable { .. }) => true,
            PipelineError::Sample { source, .. } => source.is_provider_failure(),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RerankMode {
    /// Ask the model to choose among the retrieved candidates.
    #[default]
    Llm,
    /// Take the rank-1 hit.
    MaxScore,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextMode {
    /// Inject the single selected entry.
    #[default]
    Best,
    /// Inject every retrieved entry and skip reranking.
    AllCandidates,
}

/// Label assigned when a response cannot be parsed even after the reminder.
pub const FALLBACK_LABEL: u8 = 0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub rag_enabled: bool,
    pub cot_enabled: bool,
    pub top_k: usize,
    pub rerank_mode: RerankMode,
    #[serde(default)]
    pub context_mode: ContextMode,
    /// Worker threads. Execution detail only: never serialized, so reports
    /// compare equal across thread counts.
    #[serde(skip, default = "one")]
    pub parallelism: usize,
    pub seed: u64,
}

fn one() -> usize {
    1
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            rag_enabled: true,
            cot_enabled: true,
            top_k: 5,
            rerank_mode: RerankMode::Llm,
            context_mode: ContextMode::Best,
            parallelism: 1,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.top_k == 0 {
            return Err(PipelineError::InvalidConfig(
                "top_k must be at least 1".into(),
            ));
        }
        if self.top_k > crate::prompt::MAX_RERANK_CANDIDATES && self.rerank_mode == RerankMode::Llm
        {
            return Err(PipelineError::InvalidConfig(format!(
                "llm rerank accepts at most {} candidates",
                crate::prompt::MAX_RERANK_CANDIDATES
            )));
        }
        if self.parallelism == 0 {
            return Err(PipelineError::InvalidConfig(
                "parallelism must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Everything `detect` calls out to.
#[derive(Clone, Copy)]
pub struct Providers<'a> {
    pub embedder: &'a dyn Embedder,
    pub llm: &'a dyn ChatProvider,
    pub templates: &'a TemplateSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RerankStatus {
    /// Rank-1 hit taken without asking the model.
    MaxScore,
    /// Only one candidate, nothing to choose.
    SingleCandidate,
    /// The model's choice was used.
    Parsed,
    /// The model's answer was unusable; fell back to the rank-1 hit.
    Fallback,
    /// All candidates injected, no selection made.
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleResult {
    pub sample_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_label: Option<u8>,
    pub predicted_label: u8,
    pub parse_status: ParseStatus,
    pub retries_used: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retrieval: Option<Vec<RetrievalHit>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chosen_context: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rerank_status: Option<RerankStatus>,
    pub raw_response: String,
    pub latency_ms: u64,
}

struct Retrieved {
    hits: Vec<RetrievalHit>,
    context: Vec<ScoredEntry>,
    chosen: Option<String>,
    status: RerankStatus,
    retries: u32,
}

fn scored(store: &VectorStore, hit: &RetrievalHit) -> ScoredEntry {
    ScoredEntry {
        entry: store
            .get(&hit.entry_id)
            .expect("hit comes from store")
            .clone(),
        score: hit.score,
    }
}

fn retrieve(
    code: &str,
    store: &VectorStore,
    config: &PipelineConfig,
    providers: &Providers<'_>,
) -> Result<Retrieved, PipelineError> {
    if store.is_empty() {
        return Err(PipelineError::EmptyStore);
    }
    // The query vector is only compared against the store, never inserted.
    let query = embed_text(code, providers.embedder)?;
    let hits = store.top_k(&query, config.top_k)?;
    let candidates: Vec<ScoredEntry> = hits.iter().map(|h| scored(store, h)).collect();

    if config.context_mode == ContextMode::AllCandidates {
        return Ok(Retrieved {
            hits,
            context: candidates,
            chosen: None,
            status: RerankStatus::NotApplicable,
            retries: 0,
        });
    }

    let (index, status, retries) = match config.rerank_mode {
        RerankMode::MaxScore => (0, RerankStatus::MaxScore, 0),
        RerankMode::Llm if candidates.len() == 1 => (0, RerankStatus::SingleCandidate, 0),
        RerankMode::Llm => {
            let prompt = build_rerank_prompt(providers.templates, code, &candidates)?;
            let completion = providers.llm.complete(&prompt)?;
            match parse_choice(&completion.text, candidates.len()) {
                Ok(k) => (k - 1, RerankStatus::Parsed, completion.retries_used),
                Err(e) => {
                    log::warn!("rerank answer unusable ({e}); using rank-1 hit");
                    (0, RerankStatus::Fallback, completion.retries_used)
                }
            }
        }
    };
    let chosen = candidates[index].clone();
    Ok(Retrieved {
        chosen: Some(chosen.entry.id.clone()),
        hits,
        context: vec![chosen],
        status,
        retries,
    })
}

/// Runs the full workflow on one function.
pub fn detect(
    sample_id: &str,
    code: &str,
    true_label: Option<u8>,
    store: &VectorStore,
    config: &PipelineConfig,
    providers: &Providers<'_>,
) -> Result<SampleResult, PipelineError> {
    config.validate()?;
    if code.trim().is_empty() {
        return Err(PromptError::EmptyCode.into());
    }
    let start = Instant::now();
    let retrieved = if config.rag_enabled {
        Some(retrieve(code, store, config, providers)?)
    } else {
        None
    };
    let context = retrieved.as_ref().map_or(&[][..], |r| &r.context[..]);
    let prompt =
        build_classification_prompt(providers.templates, code, context, config.cot_enabled)?;

    let first = providers.llm.complete(&prompt)?;
    let mut retries = first.retries_used + retrieved.as_ref().map_or(0, |r| r.retries);
    let (label, status, raw) = match parse_verdict(&first.text) {
        Ok(v) => (v.label, ParseStatus::Parsed, first.text),
        Err(_) => {
            let second = providers.llm.complete(&prompt.with_verdict_reminder())?;
            retries += second.retries_used + 1;
            match parse_verdict(&second.text) {
                Ok(v) => (v.label, ParseStatus::Parsed, second.text),
                Err(_) => (FALLBACK_LABEL, ParseStatus::Fallback, second.text),
            }
        }
    };
    let (retrieval, chosen_context, rerank_status) = match retrieved {
        Some(r) => (Some(r.hits), r.chosen, Some(r.status)),
        None => (None, None, None),
    };
    Ok(SampleResult {
        sample_id: sample_id.to_string(),
        true_label,
        predicted_label: label,
        parse_status: status,
        retries_used: retries,
        retrieval,
        chosen_context,
        rerank_status,
        raw_response: raw,
        latency_ms: start.elapsed().as_millis() as u64,
    })
}

/// Confusion counts over results that carry a true label.
pub fn confusion_of(results: &[SampleResult]) -> ConfusionCounts {
    confusion(
        results
            .iter()
            .filter_map(|r| r.true_label.map(|t| (t, r.predicted_label))),
    )
}

#[derive(Debug, Clone)]
pub struct Experiment {
    /// Sorted by sample id.
    pub results: Vec<SampleResult>,
    pub report: ExperimentReport,
}

/// Classifies every test sample once and computes the metrics.
///
/// With a journal, results already recorded there are reused and new ones
/// are appended as they complete; a provider failure aborts the run and
/// leaves the journal for resumption.
pub fn run_experiment(
    test_set: &[CodeSample],
    store: &VectorStore,
    config: &PipelineConfig,
    providers: &Providers<'_>,
    journal_path: Option<&Path>,
    cell: Option<&str>,
) -> Result<Experiment, PipelineError> {
    config.validate()?;
    if test_set.is_empty() {
        return Err(PipelineError::EmptyTestSet);
    }
    let mut ids = HashSet::with_capacity(test_set.len());
    for s in test_set {
        if !ids.insert(s.id.as_str()) {
            return Err(PipelineError::DuplicateSample(s.id.clone()));
        }
    }
    if config.rag_enabled && store.is_empty() {
        return Err(PipelineError::EmptyStore);
    }
    let store_checksum_before = store.checksum()?;
    let meta = ExperimentMeta::new(cell, config, providers, store, test_set)?;
    let journal = journal_path
        .map(|p| Journal::open(p, &meta.fingerprint()))
        .transpose()?;

    let mut results: Vec<SampleResult> = Vec::with_capacity(test_set.len());
    let mut pending = Vec::new();
    for s in test_set {
        match journal.as_ref().and_then(|j| j.completed().get(&s.id)) {
            Some(r) => results.push(r.clone()),
            None => pending.push(s),
        }
    }
    if !results.is_empty() {
        log::info!(
            "resuming: {} of {} samples already in journal",
            results.len(),
            test_set.len()
        );
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism)
        .build()
        .map_err(|e| PipelineError::InvalidConfig(e.to_string()))?;
    let fresh: Vec<SampleResult> = pool.install(|| {
        pending
            .par_iter()
            .map(|s| {
                let r = detect(&s.id, &s.code, Some(s.label), store, config, providers).map_err(
                    |e| PipelineError::Sample {
                        id: s.id.clone(),
                        source: Box::new(e),
                    },
                )?;
                if let Some(j) = &journal {
                    j.append(&r)?;
                }
                Ok(r)
            })
            .collect::<Result<Vec<_>, PipelineError>>()
    })?;
    results.extend(fresh);
    results.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));

    debug_assert_eq!(store.checksum()?, store_checksum_before);
    let report = ExperimentReport::new(meta, &results)?;
    Ok(Experiment { results, report })
}

/// Runs the four RAG/CoT cells over the same test set, store and providers.
/// With `journal_dir`, each cell journals to `journal-<slug>.jsonl` there.
pub fn run_ablation_grid(
    test_set: &[CodeSample],
    store: &VectorStore,
    base: &PipelineConfig,
    providers: &Providers<'_>,
    journal_dir: Option<&Path>,
) -> Result<(Vec<Experiment>, AblationReport), PipelineError> {
    let mut experiments = Vec::with_capacity(ABLATION_CELLS.len());
    let mut cells = Vec::with_capacity(ABLATION_CELLS.len());
    for (name, slug, rag, cot) in ABLATION_CELLS {
        let config = PipelineConfig {
            rag_enabled: rag,
            cot_enabled: cot,
            ..base.clone()
        };
        let journal = journal_dir.map(|d| d.join(format!("journal-{slug}.jsonl")));
        let exp = run_experiment(
            test_set,
            store,
            &config,
            providers,
            journal.as_deref(),
            Some(name),
        )?;
        cells.push(AblationCell {
            name: name.to_string(),
            rag_enabled: rag,
            cot_enabled: cot,
            report: exp.report.clone(),
        });
        experiments.push(exp);
    }
    Ok((experiments, AblationReport { cells }))
}

/// Results recomputed into metrics; used by `ExperimentReport::new`.
fn metrics_for(results: &[SampleResult]) -> Result<crate::metrics::MetricsReport, PipelineError> {
    let counts = confusion_of(results);
    let mut metrics = compute_metrics(counts)?;
    let fallbacks = results
        .iter()
        .filter(|r| r.parse_status == ParseStatus::Fallback)
        .count();
    metrics.parse_fallback_rate = fallbacks as f64 / results.len() as f64;
    Ok(metrics)
}
