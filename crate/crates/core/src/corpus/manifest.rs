use super::{
    balanced_sample, corpus_stats, ingest, select_knowledge_base, CodeSample, ColumnMap,
    CorpusError, CorpusStats, IngestSummary, Ingested, Split,
};
use crate::hashing::sha256_hex;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::{Path, PathBuf};

pub const MANIFEST_VERSION: u32 = 1;

/// Per-split id lists produced by `split`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub n_test: usize,
    pub kb_requested: usize,
    pub test_vul: usize,
    pub test_non_vul: usize,
    pub kb_count: usize,
    pub test_ids: Vec<String>,
    pub kb_ids: Vec<String>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// JSON document describing an ingested dataset and, after splitting, which
/// sample ids belong to the test set and the knowledge base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub version: u32,
    pub source: PathBuf,
    pub source_sha256: String,
    pub columns: ColumnMap,
    pub ingest: IngestSummary,
    pub stats: CorpusStats,
    #[serde(default)]
    pub split: Option<SplitManifest>,
}

fn manifest_err(msg: impl Into<String>) -> CorpusError {
    CorpusError::Manifest(msg.into())
}

impl CorpusManifest {
    /// Ingests `path` and describes the result.
    pub fn create(path: &Path, columns: &ColumnMap) -> Result<(Self, Ingested), CorpusError> {
        let ingested = ingest(path, columns)?;
        let bytes = std::fs::read(path)?;
        let manifest = Self {
            version: MANIFEST_VERSION,
            source: path.canonicalize()?,
            source_sha256: sha256_hex(&bytes),
            columns: columns.clone(),
            ingest: ingested.summary.clone(),
            stats: corpus_stats(&ingested.samples),
            split: None,
        };
        Ok((manifest, ingested))
    }

    /// Re-reads the source file, failing if it changed since the manifest was
    /// written.
    pub fn reingest(&self) -> Result<Vec<CodeSample>, CorpusError> {
        let bytes = std::fs::read(&self.source)
            .map_err(|_| CorpusError::MissingFile(self.source.clone()))?;
        let digest = sha256_hex(&bytes);
        if digest != self.source_sha256 {
            return Err(manifest_err(format!(
                "{} changed since ingest (sha256 {digest}, manifest {})",
                self.source.display(),
                self.source_sha256
            )));
        }
        Ok(ingest(&self.source, &self.columns)?.samples)
    }

    /// Draws the balanced test set and the knowledge base and records them.
    pub fn assign_split(
        &mut self,
        samples: &[CodeSample],
        n_test: usize,
        kb_size: usize,
        seed: u64,
    ) -> Result<(), CorpusError> {
        let test = balanced_sample(samples, n_test, seed)?;
        let kb = select_knowledge_base(samples, &test, kb_size, seed)?;
        let test_vul = test.iter().filter(|s| s.is_vulnerable()).count();
        self.split = Some(SplitManifest {
            seed,
            n_test,
            kb_requested: kb_size,
            test_vul,
            test_non_vul: test.len() - test_vul,
            kb_count: kb.samples.len(),
            test_ids: test.iter().map(|s| s.id.clone()).collect(),
            kb_ids: kb.samples.iter().map(|s| s.id.clone()).collect(),
            warnings: kb.warning.into_iter().collect(),
        });
        Ok(())
    }

    /// Resolves the recorded split back into samples: `(test, kb)`.
    pub fn split_samples(
        &self,
        samples: &[CodeSample],
    ) -> Result<(Vec<CodeSample>, Vec<CodeSample>), CorpusError> {
        let split = self
            .split
            .as_ref()
            .ok_or_else(|| manifest_err("manifest has no split; run split first"))?;
        let by_id: HashMap<&str, &CodeSample> =
            samples.iter().map(|s| (s.id.as_str(), s)).collect();
        let pick = |ids: &[String], split: Split| {
            ids.iter()
                .map(|id| {
                    by_id
                        .get(id.as_str())
                        .map(|s| CodeSample {
                            split,
                            ..(*s).clone()
                        })
                        .ok_or_else(|| manifest_err(format!("sample {id:?} not found in source")))
                })
                .collect::<Result<Vec<_>, _>>()
        };
        Ok((
            pick(&split.test_ids, Split::Test)?,
            pick(&split.kb_ids, Split::KnowledgeBase)?,
        ))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        if !path.is_file() {
            return Err(CorpusError::MissingFile(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path)?;
        let m: Self = serde_json::from_str(&text).map_err(|e| manifest_err(e.to_string()))?;
        if m.version != MANIFEST_VERSION {
            return Err(manifest_err(format!(
                "unsupported manifest version {}",
                m.version
            )));
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn write_dataset(dir: &Path) -> PathBuf {
        let mut text = String::from("id,func_before,vul\n");
        for i in 0..20 {
            let label = u8::from(i % 4 == 0);
            text.push_str(&format!(
                "f{i},\"int f{i}(int x) {{ return x + {i}; }}\",{label}\n"
            ));
        }
        let path = dir.join("data.csv");
        std::fs::write(&path, text).unwrap();
        path
    }

    fn columns() -> ColumnMap {
        ColumnMap {
            id: Some("id".into()),
            cwe_id: None,
            vuln_name: None,
            description: None,
            ..ColumnMap::default()
        }
    }

    #[test]
    fn split_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let data = write_dataset(dir.path());
        let (mut m, ingested) = CorpusManifest::create(&data, &columns()).unwrap();
        assert_eq!(m.stats.total, 20);
        assert_eq!(m.stats.vul, 5);
        m.assign_split(&ingested.samples, 4, 10, 11).unwrap();
        let split = m.split.as_ref().unwrap();
        assert_eq!(split.kb_count, 3);
        assert_eq!(split.warnings.len(), 1);

        let path = dir.path().join("manifest.json");
        m.save(&path).unwrap();
        let loaded = CorpusManifest::load(&path).unwrap();
        assert_eq!(loaded, m);

        let samples = loaded.reingest().unwrap();
        let (test, kb) = loaded.split_samples(&samples).unwrap();
        assert_eq!(test.len(), 4);
        assert_eq!(kb.len(), 3);
        let t: HashSet<_> = test.iter().map(|s| &s.id).collect();
        assert!(kb.iter().all(|s| !t.contains(&s.id)));
    }

    #[test]
    fn same_seed_same_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let data = write_dataset(dir.path());
        let run = || {
            let (mut m, ing) = CorpusManifest::create(&data, &columns()).unwrap();
            m.assign_split(&ing.samples, 6, 2, 5).unwrap();
            m.to_json()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn modified_source_detected() {
        let dir = tempfile::tempdir().unwrap();
        let data = write_dataset(dir.path());
        let (m, _) = CorpusManifest::create(&data, &columns()).unwrap();
        std::fs::write(&data, "id,func_before,vul\nx,int x;,1\n").unwrap();
        assert!(matches!(m.reingest(), Err(CorpusError::Manifest(_))));
    }
}
