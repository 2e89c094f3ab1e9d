//! Retrieval-augmented vulnerability detection for C/C++ functions.
//!
//! The crate is organised along the detection workflow:
//!
//! - [`corpus`]: Big-Vul style dataset ingestion, statistics, balanced test
//!   split and knowledge-base selection.
//! - [`embed`]: embedding vectors, providers and similarity math.
//! - [`vstore`]: exact in-process vector store with JSON-lines persistence.
//! - [`prompt`]: classification and rerank prompt construction.
//! - [`llm`]: chat-completion providers and response parsing.
//! - [`pipeline`]: embed, retrieve, rerank, prompt, classify; experiments and
//!   the RAG/CoT ablation grid.
//! - [`metrics`]: confusion counts, accuracy/precision/recall/F1 and
//!   consistency checks for published metric tuples.

pub mod corpus;
pub mod embed;
pub mod hashing;
pub mod llm;
pub mod metrics;
pub mod pipeline;
pub mod prompt;
pub mod synthetic;
pub mod transport;
pub mod vstore;

pub use corpus::{CodeSample, ColumnMap, CorpusError, CorpusManifest, CorpusStats, Split};
pub use embed::{
    cosine_similarity, euclidean_distance, EmbedError, Embedder, EmbedderConfig, EmbedderKind,
    EmbeddingVector, HashedEmbedder, Normalization,
};
pub use llm::{ChatProvider, LlmError, ParseStatus, ProviderConfig, ProviderKind, Verdict};
pub use metrics::{ConfusionCounts, MetricsError, MetricsReport};
pub use pipeline::{
    AblationReport, ExperimentReport, PipelineConfig, PipelineError, Providers, RerankMode,
    SampleResult,
};
pub use prompt::{PromptError, PromptSpec, TemplateSet};
pub use vstore::{KnowledgeEntry, RetrievalHit, StoreError, VectorStore};
