//! Shared inputs for the benchmarks.

use vulnrag_core::synthetic::planted_corpus;
use vulnrag_core::{CodeSample, Embedder, EmbedderConfig, KnowledgeEntry, VectorStore};

/// Planted corpus with half vulnerable, half clean samples.
pub fn samples(n: usize, seed: u64) -> Vec<CodeSample> {
    planted_corpus(n / 2, n - n / 2, seed)
}

pub fn hashed(dim: usize) -> Box<dyn Embedder> {
    EmbedderConfig::hashed_local(dim)
        .build(None, None)
        .expect("hashed embedder needs no credentials")
}

/// Store of `n` embedded samples.
pub fn store(n: usize, embedder: &dyn Embedder) -> VectorStore {
    let entries = samples(n, 7)
        .iter()
        .map(|s| KnowledgeEntry::from_sample(s, embedder.embed(&s.code).expect("embed")))
        .collect();
    VectorStore::build(entries).expect("store")
}
