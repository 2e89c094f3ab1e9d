use super::{EmbedError, EmbeddingVector};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

/// One line of the cache file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub model_id: String,
    pub text_hash: String,
    pub vector: EmbeddingVector,
}

/// Content-addressed embedding cache keyed on `(model_id, sha256(text))`.
///
/// Backed by an append-only JSON-lines file when opened from a path. Reads
/// take a shared lock; appends go through a single writer.
pub struct EmbeddingCache {
    path: Option<PathBuf>,
    entries: RwLock<HashMap<(String, String), EmbeddingVector>>,
    writer: Mutex<Option<BufWriter<File>>>,
}

impl EmbeddingCache {
    pub fn in_memory() -> Self {
        Self {
            path: None,
            entries: RwLock::new(HashMap::new()),
            writer: Mutex::new(None),
        }
    }

    pub fn open(path: &Path) -> Result<Self, EmbedError> {
        let mut entries = HashMap::new();
        if path.exists() {
            let file = File::open(path).map_err(|e| EmbedError::Cache(e.to_string()))?;
            for (lineno, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| EmbedError::Cache(e.to_string()))?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: CacheRecord = serde_json::from_str(&line).map_err(|e| {
                    EmbedError::Cache(format!("{}:{}: {e}", path.display(), lineno + 1))
                })?;
                entries.insert((rec.model_id, rec.text_hash), rec.vector);
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| EmbedError::Cache(e.to_string()))?;
        Ok(Self {
            path: Some(path.to_path_buf()),
            entries: RwLock::new(entries),
            writer: Mutex::new(Some(BufWriter::new(file))),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap_or_else(|p| p.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, model_id: &str, text_hash: &str) -> Option<EmbeddingVector> {
        self.entries
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .get(&(model_id.to_string(), text_hash.to_string()))
            .cloned()
    }

    pub fn put(
        &self,
        model_id: &str,
        text_hash: &str,
        vector: EmbeddingVector,
    ) -> Result<(), EmbedError> {
        let key = (model_id.to_string(), text_hash.to_string());
        {
            let mut entries = self.entries.write().unwrap_or_else(|p| p.into_inner());
            if entries.contains_key(&key) {
                return Ok(());
            }
            entries.insert(key, vector.clone());
        }
        let mut guard = self.writer.lock().unwrap_or_else(|p| p.into_inner());
        if let Some(w) = guard.as_mut() {
            let rec = CacheRecord {
                model_id: model_id.to_string(),
                text_hash: text_hash.to_string(),
                vector,
            };
            let line = serde_json::to_string(&rec).map_err(|e| EmbedError::Cache(e.to_string()))?;
            writeln!(w, "{line}")
                .and_then(|_| w.flush())
                .map_err(|e| EmbedError::Cache(e.to_string()))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn persists_across_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let v = EmbeddingVector::new(vec![0.1, 0.2, 0.30000000000000004]).unwrap();
        {
            let cache = EmbeddingCache::open(&path).unwrap();
            cache.put("m", "abc", v.clone()).unwrap();
            cache.put("m", "abc", v.clone()).unwrap();
        }
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 1);
        let cache = EmbeddingCache::open(&path).unwrap();
        assert_eq!(cache.get("m", "abc"), Some(v));
        assert_eq!(cache.get("other", "abc"), None);
    }

    #[test]
    fn corrupt_line_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        std::fs::write(&path, "{not json}\n").unwrap();
        assert!(matches!(
            EmbeddingCache::open(&path),
            Err(EmbedError::Cache(_))
        ));
    }
}
