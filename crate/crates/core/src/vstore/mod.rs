//! Exact in-process vector store over knowledge-base entries.
//!
//! Queries are full scans: `top_k` ranks by cosine similarity, `nearest`
//! minimises Euclidean distance. Ties break by entry id ascending in both.

mod persist;

pub use persist::{StoreHeader, STORE_FORMAT_VERSION};

use crate::corpus::CodeSample;
use crate::embed::{cosine_similarity, euclidean_distance, EmbedError, EmbeddingVector};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("duplicate entry id {0:?}")]
    DuplicateId(String),
    #[error("dimension mismatch: store has dim {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("entry {0:?} has a zero-norm embedding")]
    ZeroEmbedding(String),
    #[error("store is empty")]
    EmptyStore,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("corrupt store file: {0}")]
    CorruptFile(String),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A known-vulnerable example together with its embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeEntry {
    pub id: String,
    pub cwe_id: Option<String>,
    pub vuln_name: Option<String>,
    pub description: Option<String>,
    pub code: String,
    pub embedding: EmbeddingVector,
}

impl KnowledgeEntry {
    pub fn from_sample(sample: &CodeSample, embedding: EmbeddingVector) -> Self {
        Self {
            id: sample.id.clone(),
            cwe_id: sample.cwe_id.clone(),
            vuln_name: sample.vuln_name.clone(),
            description: sample.description.clone(),
            code: sample.code.clone(),
            embedding,
        }
    }
}

/// One ranked retrieval result. `score` is the raw cosine similarity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalHit {
    pub entry_id: String,
    pub score: f64,
    pub rank: usize,
}

/// Result of a Euclidean nearest-neighbour query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NearestHit {
    pub entry_id: String,
    pub distance: f64,
}

/// Immutable collection of knowledge entries sharing one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorStore {
    dim: usize,
    entries: Vec<KnowledgeEntry>,
    by_id: HashMap<String, usize>,
}

impl VectorStore {
    /// Builds a store, taking the dimension from the first entry. An empty
    /// list gives an empty store of dimension 0 that accepts any query.
    pub fn build(entries: Vec<KnowledgeEntry>) -> Result<Self, StoreError> {
        let dim = entries.first().map_or(0, |e| e.embedding.dim());
        Self::build_with_dim(dim, entries)
    }

    pub fn build_with_dim(dim: usize, entries: Vec<KnowledgeEntry>) -> Result<Self, StoreError> {
        let mut by_id = HashMap::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            if e.embedding.dim() != dim {
                return Err(StoreError::DimensionMismatch {
                    expected: dim,
                    actual: e.embedding.dim(),
                });
            }
            if e.embedding.norm() == 0.0 {
                return Err(StoreError::ZeroEmbedding(e.id.clone()));
            }
            if by_id.insert(e.id.clone(), i).is_some() {
                return Err(StoreError::DuplicateId(e.id.clone()));
            }
        }
        Ok(Self {
            dim,
            entries,
            by_id,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[KnowledgeEntry] {
        &self.entries
    }

    pub fn get(&self, id: &str) -> Option<&KnowledgeEntry> {
        self.by_id.get(id).map(|&i| &self.entries[i])
    }

    fn check_query(&self, query: &EmbeddingVector) -> Result<(), StoreError> {
        if query.dim() != self.dim {
            return Err(StoreError::DimensionMismatch {
                expected: self.dim,
                actual: query.dim(),
            });
        }
        Ok(())
    }

    /// The `min(k, len)` entries with the highest cosine similarity to
    /// `query`, best first.
    pub fn top_k(
        &self,
        query: &EmbeddingVector,
        k: usize,
    ) -> Result<Vec<RetrievalHit>, StoreError> {
        if k == 0 {
            return Err(StoreError::InvalidK);
        }
        if self.entries.is_empty() {
            return Ok(Vec::new());
        }
        self.check_query(query)?;

        let mut heap: BinaryHeap<Ranked<'_>> = BinaryHeap::with_capacity(k.min(self.len()) + 1);
        for entry in &self.entries {
            // `+ 0.0` folds -0.0 into 0.0 so ties compare equal
            let score = cosine_similarity(query, &entry.embedding)? + 0.0;
            let cand = Ranked {
                score,
                id: &entry.id,
            };
            if heap.len() < k {
                heap.push(cand);
            } else if heap.peek().is_some_and(|worst| cand < *worst) {
                heap.pop();
                heap.push(cand);
            }
        }
        Ok(heap
            .into_sorted_vec()
            .into_iter()
            .enumerate()
            .map(|(i, r)| RetrievalHit {
                entry_id: r.id.to_string(),
                score: r.score,
                rank: i + 1,
            })
            .collect())
    }

    /// The entry minimising Euclidean distance to `query`.
    pub fn nearest(&self, query: &EmbeddingVector) -> Result<NearestHit, StoreError> {
        if self.entries.is_empty() {
            return Err(StoreError::EmptyStore);
        }
        self.check_query(query)?;
        let mut best: Option<(f64, &str)> = None;
        for entry in &self.entries {
            let d = euclidean_distance(query, &entry.embedding)?;
            let replace = match best {
                None => true,
                Some((bd, bid)) => d < bd || (d == bd && entry.id.as_str() < bid),
            };
            if replace {
                best = Some((d, &entry.id));
            }
        }
        let (distance, id) = best.expect("non-empty store");
        Ok(NearestHit {
            entry_id: id.to_string(),
            distance,
        })
    }
}

/// Orders candidates best-first: higher score, then smaller id. In a
/// max-heap the top is therefore the worst kept candidate.
#[derive(Debug)]
struct Ranked<'a> {
    score: f64,
    id: &'a str,
}

impl Ord for Ranked<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .score
            .total_cmp(&self.score)
            .then_with(|| self.id.cmp(other.id))
    }
}

impl PartialOrd for Ranked<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Ranked<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Ranked<'_> {}

#[cfg(test)]
pub(crate) fn entry(id: &str, values: &[f64]) -> KnowledgeEntry {
    KnowledgeEntry {
        id: id.to_string(),
        cwe_id: Some("CWE-119".into()),
        vuln_name: None,
        description: None,
        code: format!("void {id}(void) {{}}"),
        embedding: EmbeddingVector::new(values.to_vec()).unwrap(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(values: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(values.to_vec()).unwrap()
    }

    #[test]
    fn top_k_hand_example() {
        let store = VectorStore::build(vec![
            entry("a", &[1.0, 0.0]),
            entry("b", &[0.6, 0.8]),
            entry("c", &[0.0, 1.0]),
        ])
        .unwrap();
        let hits = store.top_k(&q(&[1.0, 0.0]), 2).unwrap();
        assert_eq!(hits.len(), 2);
        assert_eq!(
            (hits[0].entry_id.as_str(), hits[0].score, hits[0].rank),
            ("a", 1.0, 1)
        );
        assert_eq!(hits[1].entry_id, "b");
        assert!((hits[1].score - 0.6).abs() < 1e-15);
        assert_eq!(hits[1].rank, 2);
    }

    #[test]
    fn k_clamped_to_size() {
        let store = VectorStore::build(vec![
            entry("a", &[1.0, 0.0]),
            entry("b", &[0.6, 0.8]),
            entry("c", &[0.0, 1.0]),
        ])
        .unwrap();
        let hits = store.top_k(&q(&[0.3, 0.2]), 5).unwrap();
        assert_eq!(
            hits.iter().map(|h| h.rank).collect::<Vec<_>>(),
            vec![1, 2, 3]
        );
    }

    #[test]
    fn single_entry_store() {
        let store = VectorStore::build(vec![entry("only", &[0.2, 0.9])]).unwrap();
        let hits = store.top_k(&q(&[-1.0, 0.5]), 5).unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].entry_id, "only");
        assert_eq!(hits[0].rank, 1);
    }

    #[test]
    fn ties_break_by_id() {
        let store = VectorStore::build(vec![
            entry("z", &[1.0, 0.0]),
            entry("m", &[2.0, 0.0]),
            entry("a", &[3.0, 0.0]),
        ])
        .unwrap();
        let hits = store.top_k(&q(&[1.0, 0.0]), 2).unwrap();
        assert_eq!(hits[0].entry_id, "a");
        assert_eq!(hits[1].entry_id, "m");
    }

    #[test]
    fn empty_store_behaviour() {
        let store = VectorStore::build(vec![]).unwrap();
        assert!(store.is_empty());
        assert!(store.top_k(&q(&[1.0]), 5).unwrap().is_empty());
        assert!(matches!(
            store.nearest(&q(&[1.0])),
            Err(StoreError::EmptyStore)
        ));
    }

    #[test]
    fn build_errors() {
        assert!(matches!(
            VectorStore::build(vec![entry("a", &[1.0]), entry("a", &[2.0])]),
            Err(StoreError::DuplicateId(id)) if id == "a"
        ));
        assert!(matches!(
            VectorStore::build(vec![entry("a", &[1.0]), entry("b", &[1.0, 2.0])]),
            Err(StoreError::DimensionMismatch {
                expected: 1,
                actual: 2
            })
        ));
        assert!(matches!(
            VectorStore::build(vec![entry("a", &[0.0, 0.0])]),
            Err(StoreError::ZeroEmbedding(_))
        ));
    }

    #[test]
    fn query_errors() {
        let store = VectorStore::build(vec![entry("a", &[1.0, 0.0])]).unwrap();
        assert!(matches!(
            store.top_k(&q(&[1.0]), 1),
            Err(StoreError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            store.top_k(&q(&[1.0, 0.0]), 0),
            Err(StoreError::InvalidK)
        ));
        assert!(matches!(
            store.nearest(&q(&[1.0])),
            Err(StoreError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn nearest_examples() {
        // zero embeddings are rejected at build, so the origin is nudged
        let store = VectorStore::build(vec![
            entry("origin", &[1e-9, 0.0]),
            entry("far", &[3.0, 4.0]),
        ])
        .unwrap();
        let hit = store.nearest(&q(&[1.0, 1.0])).unwrap();
        assert_eq!(hit.entry_id, "origin");
        assert!((hit.distance - 2f64.sqrt()).abs() < 1e-8);

        let hit = store.nearest(&q(&[3.0, 4.0])).unwrap();
        assert_eq!(hit.entry_id, "far");
        assert_eq!(hit.distance, 0.0);
    }

    #[test]
    fn nearest_ties_break_by_id() {
        let store =
            VectorStore::build(vec![entry("b", &[1.0, 0.0]), entry("a", &[-1.0, 0.0])]).unwrap();
        assert_eq!(store.nearest(&q(&[0.0, 1.0])).unwrap().entry_id, "a");
    }
}
