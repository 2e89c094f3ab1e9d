//! Layered settings. Each source (flags, config file, environment) yields a
//! [`Layer`]; the first layer that sets a key wins, in the order
//! flag > config file > environment > built-in default.

use anyhow::{Context, Result};
use clap::Args;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use vulnrag_core::pipeline::ContextMode;
use vulnrag_core::{
    EmbedderConfig, EmbedderKind, Normalization, PipelineConfig, ProviderConfig, ProviderKind,
    RerankMode,
};

pub const ENV_API_KEY: &str = "VULNRAG_API_KEY";
pub const ENV_EMBED_API_KEY: &str = "VULNRAG_EMBED_API_KEY";
pub const ENV_LLM_ENDPOINT: &str = "VULNRAG_LLM_ENDPOINT";
pub const ENV_LLM_MODEL: &str = "VULNRAG_LLM_MODEL";
pub const ENV_EMBED_ENDPOINT: &str = "VULNRAG_EMBED_ENDPOINT";
pub const ENV_EMBED_MODEL: &str = "VULNRAG_EMBED_MODEL";

macro_rules! layer {
    ($($field:ident : $ty:ty),* $(,)?) => {
        /// One source of settings. Every key is optional; unset keys fall
        /// through to the next source. Credentials are deliberately absent.
        #[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
        #[serde(deny_unknown_fields)]
        pub struct Layer {
            $(
                #[serde(default, skip_serializing_if = "Option::is_none")]
                pub $field: Option<$ty>,
            )*
        }

        impl Layer {
            /// Keys set here win; the rest come from `lower`.
            pub fn over(self, lower: Layer) -> Layer {
                Layer { $($field: self.$field.or(lower.$field),)* }
            }
        }
    };
}

layer! {
    rag: bool,
    cot: bool,
    top_k: usize,
    rerank: RerankMode,
    context: ContextMode,
    parallelism: usize,
    seed: u64,
    llm: ProviderKind,
    llm_endpoint: String,
    llm_model: String,
    temperature: f64,
    max_retries: u32,
    timeout_secs: u64,
    requests_per_second: f64,
    scripted_path: PathBuf,
    default_response: String,
    heuristic_threshold: f64,
    embedder: EmbedderKind,
    embed_dim: usize,
    embed_endpoint: String,
    embed_model: String,
    normalization: Normalization,
    max_chars: usize,
    templates_dir: PathBuf,
}

impl Layer {
    pub fn from_file(path: &Path) -> Result<Layer> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn from_env() -> Layer {
        let var = |k: &str| std::env::var(k).ok().filter(|v| !v.is_empty());
        Layer {
            llm_endpoint: var(ENV_LLM_ENDPOINT),
            llm_model: var(ENV_LLM_MODEL),
            embed_endpoint: var(ENV_EMBED_ENDPOINT),
            embed_model: var(ENV_EMBED_MODEL),
            ..Layer::default()
        }
    }

    /// Built-in defaults, as a fully populated layer for the run manifest.
    pub fn defaults() -> Layer {
        let p = PipelineConfig::default();
        let l = ProviderConfig::new(ProviderKind::Remote);
        let e = EmbedderConfig::default();
        Layer {
            rag: Some(p.rag_enabled),
            cot: Some(p.cot_enabled),
            top_k: Some(p.top_k),
            rerank: Some(p.rerank_mode),
            context: Some(p.context_mode),
            parallelism: Some(p.parallelism),
            seed: Some(p.seed),
            llm: Some(l.kind),
            temperature: Some(l.temperature),
            max_retries: Some(l.max_retries),
            timeout_secs: Some(l.timeout_secs),
            default_response: Some(l.default_response),
            heuristic_threshold: Some(l.heuristic_threshold),
            embedder: Some(e.kind),
            embed_dim: Some(e.dim),
            normalization: Some(e.normalization),
            max_chars: Some(e.max_chars),
            ..Layer::default()
        }
    }
}

/// Settings after layering, split into the library config types.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub pipeline: PipelineConfig,
    pub llm: ProviderConfig,
    pub embedder: EmbedderConfig,
    pub templates_dir: Option<PathBuf>,
    /// Every effective key, recorded in run manifests.
    pub snapshot: Layer,
}

fn req<T>(v: Option<T>) -> T {
    v.expect("default layer sets every required key")
}

pub fn resolve(flags: Layer, file: Option<&Path>) -> Result<Resolved> {
    resolve_with(flags, file, Layer::default())
}

/// Like [`resolve`], with `fallback` consulted after the environment and
/// before the built-in defaults.
pub fn resolve_with(flags: Layer, file: Option<&Path>, fallback: Layer) -> Result<Resolved> {
    let file = file.map(Layer::from_file).transpose()?.unwrap_or_default();
    let s = flags
        .over(file)
        .over(Layer::from_env())
        .over(fallback)
        .over(Layer::defaults());

    let pipeline = PipelineConfig {
        rag_enabled: req(s.rag),
        cot_enabled: req(s.cot),
        top_k: req(s.top_k),
        rerank_mode: req(s.rerank),
        context_mode: req(s.context),
        parallelism: req(s.parallelism),
        seed: req(s.seed),
    };
    let llm = ProviderConfig {
        kind: req(s.llm),
        endpoint: s.llm_endpoint.clone(),
        model_id: s.llm_model.clone(),
        temperature: req(s.temperature),
        max_retries: req(s.max_retries),
        timeout_secs: req(s.timeout_secs),
        requests_per_second: s.requests_per_second,
        scripted_path: s.scripted_path.clone(),
        default_response: req(s.default_response.clone()),
        heuristic_threshold: req(s.heuristic_threshold),
    };
    let embedder = EmbedderConfig {
        kind: req(s.embedder),
        dim: req(s.embed_dim),
        model_id: s.embed_model.clone(),
        endpoint: s.embed_endpoint.clone(),
        normalization: req(s.normalization),
        max_chars: req(s.max_chars),
    };
    Ok(Resolved {
        pipeline,
        llm,
        embedder,
        templates_dir: s.templates_dir.clone(),
        snapshot: s,
    })
}

pub fn llm_api_key() -> Option<String> {
    std::env::var(ENV_API_KEY).ok().filter(|k| !k.is_empty())
}

pub fn embed_api_key() -> Option<String> {
    std::env::var(ENV_EMBED_API_KEY)
        .ok()
        .filter(|k| !k.is_empty())
        .or_else(llm_api_key)
}

/// Parses a snake_case enum value through its serde representation.
fn parse_enum<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.replace('-', "_")))
        .map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Default, Args)]
pub struct PipelineArgs {
    /// Retrieve context from the knowledge base.
    #[arg(long, overrides_with = "no_rag")]
    rag: bool,
    #[arg(long, overrides_with = "rag")]
    no_rag: bool,
    /// Ask for step-by-step reasoning before the verdict.
    #[arg(long, overrides_with = "no_cot")]
    cot: bool,
    #[arg(long, overrides_with = "cot")]
    no_cot: bool,
    /// How to pick one entry from the retrieved candidates: llm or max_score.
    #[arg(long, value_parser = parse_enum::<RerankMode>)]
    rerank: Option<RerankMode>,
    /// Candidates retrieved per query (default 5).
    #[arg(long)]
    top_k: Option<usize>,
    /// best (one selected entry) or all_candidates.
    #[arg(long, value_parser = parse_enum::<ContextMode>)]
    context: Option<ContextMode>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    parallelism: Option<usize>,
    /// Pipeline seed; defaults to the split seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn toggle(on: bool, off: bool) -> Option<bool> {
    match (on, off) {
        (true, _) => Some(true),
        (_, true) => Some(false),
        _ => None,
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct ProviderArgs {
    /// Chat provider: remote, scripted or heuristic.
    #[arg(long, value_parser = parse_enum::<ProviderKind>)]
    llm: Option<ProviderKind>,
    /// Chat-completions URL of the remote provider.
    #[arg(long)]
    llm_endpoint: Option<String>,
    #[arg(long)]
    llm_model: Option<String>,
    #[arg(long)]
    temperature: Option<f64>,
    /// Transport retries per request.
    #[arg(long)]
    max_retries: Option<u32>,
    #[arg(long)]
    requests_per_second: Option<f64>,
    /// JSON map of prompt SHA-256 to response, for the scripted provider.
    #[arg(long)]
    scripted: Option<PathBuf>,
    /// Similarity threshold of the heuristic provider.
    #[arg(long)]
    threshold: Option<f64>,
    /// Embedder: hashed_local or remote.
    #[arg(long, value_parser = parse_enum::<EmbedderKind>)]
    embedder: Option<EmbedderKind>,
    /// Dimension of the hashed embedder (default 256).
    #[arg(long)]
    embed_dim: Option<usize>,
    #[arg(long)]
    embed_endpoint: Option<String>,
    #[arg(long)]
    embed_model: Option<String>,
    /// Directory with system.txt, classify.txt, rerank.txt, cot_steps.txt.
    #[arg(long)]
    templates: Option<PathBuf>,
}

impl PipelineArgs {
    pub fn layer(&self) -> Layer {
        Layer {
            rag: toggle(self.rag, self.no_rag),
            cot: toggle(self.cot, self.no_cot),
            top_k: self.top_k,
            rerank: self.rerank,
            context: self.context,
            parallelism: self.parallelism,
            seed: self.seed,
            ..Layer::default()
        }
    }
}

impl ProviderArgs {
    pub fn layer(&self) -> Layer {
        Layer {
            llm: self.llm,
            llm_endpoint: self.llm_endpoint.clone(),
            llm_model: self.llm_model.clone(),
            temperature: self.temperature,
            max_retries: self.max_retries,
            requests_per_second: self.requests_per_second,
            scripted_path: self.scripted.clone(),
            heuristic_threshold: self.threshold,
            embedder: self.embedder,
            embed_dim: self.embed_dim,
            embed_endpoint: self.embed_endpoint.clone(),
            embed_model: self.embed_model.clone(),
            templates_dir: self.templates.clone(),
            ..Layer::default()
        }
    }
}
