//! Dataset ingestion, corpus statistics and the seeded test / knowledge-base
//! splits.

mod manifest;

pub use manifest::{CorpusManifest, SplitManifest, MANIFEST_VERSION};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::io::Read;
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("dataset file not found: {0}")]
    MissingFile(PathBuf),
    #[error("column {0:?} not present in header")]
    MissingColumn(String),
    #[error("no valid rows in dataset")]
    EmptyCorpus,
    #[error("not enough samples with label {label}: have {have}, need {need}")]
    InsufficientClass { label: u8, have: usize, need: usize },
    #[error("test set size must be even, got {0}")]
    OddTestSize(usize),
    #[error("no vulnerable samples outside the test set")]
    NoVulnerableSamples,
    #[error("knowledge-base size must be at least 1")]
    InvalidKbSize,
    #[error("manifest error: {0}")]
    Manifest(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    #[default]
    Unassigned,
    Test,
    KnowledgeBase,
}

/// One labeled function from the dataset. `label` is 1 for vulnerable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeSample {
    pub id: String,
    pub code: String,
    pub label: u8,
    pub cwe_id: Option<String>,
    pub vuln_name: Option<String>,
    pub description: Option<String>,
    #[serde(default)]
    pub split: Split,
}

impl CodeSample {
    pub fn is_vulnerable(&self) -> bool {
        self.label == 1
    }
}

/// Maps dataset header names onto sample fields. The defaults follow the
/// column names of the public Big-Vul CSV release (`MSR_data_cleaned.csv`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMap {
    /// Row ids fall back to `row-<n>` (1-based data row) when unmapped.
    #[serde(default)]
    pub id: Option<String>,
    pub code: String,
    pub label: String,
    #[serde(default)]
    pub cwe_id: Option<String>,
    #[serde(default)]
    pub vuln_name: Option<String>,
    #[serde(default)]
    pub description: Option<String>,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
}

fn default_delimiter() -> char {
    ','
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            id: None,
            code: "func_before".into(),
            label: "vul".into(),
            cwe_id: Some("CWE ID".into()),
            vuln_name: Some("Vulnerability Classification".into()),
            description: Some("Summary".into()),
            delimiter: ',',
        }
    }
}

/// Row accounting for one ingest.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub rows_read: usize,
    pub accepted: usize,
    pub skipped_empty_code: usize,
    pub skipped_bad_label: usize,
    pub skipped_malformed: usize,
    pub skipped_duplicate_id: usize,
}

impl IngestSummary {
    pub fn skipped(&self) -> usize {
        self.skipped_empty_code
            + self.skipped_bad_label
            + self.skipped_malformed
            + self.skipped_duplicate_id
    }
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub samples: Vec<CodeSample>,
    pub summary: IngestSummary,
}

pub fn ingest(path: &Path, columns: &ColumnMap) -> Result<Ingested, CorpusError> {
    if !path.is_file() {
        return Err(CorpusError::MissingFile(path.to_path_buf()));
    }
    ingest_reader(std::fs::File::open(path)?, columns)
}

fn parse_label(raw: &str) -> Option<u8> {
    match raw.trim() {
        "0" => Some(0),
        "1" => Some(1),
        _ => None,
    }
}

fn non_empty(raw: Option<&str>) -> Option<String> {
    raw.map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
}

/// Reads delimiter-separated text with a header row, skipping rows with blank
/// code, labels outside {0,1}, unparsable records or repeated ids.
pub fn ingest_reader<R: Read>(reader: R, columns: &ColumnMap) -> Result<Ingested, CorpusError> {
    let delimiter = u8::try_from(columns.delimiter)
        .map_err(|_| CorpusError::Manifest("delimiter must be a single-byte character".into()))?;
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CorpusError::MissingColumn(name.to_string()))
    };
    let find_opt = |name: &Option<String>| name.as_deref().map(find).transpose();

    let code_col = find(&columns.code)?;
    let label_col = find(&columns.label)?;
    let id_col = find_opt(&columns.id)?;
    let cwe_col = find_opt(&columns.cwe_id)?;
    let name_col = find_opt(&columns.vuln_name)?;
    let desc_col = find_opt(&columns.description)?;

    let mut summary = IngestSummary::default();
    let mut samples = Vec::new();
    let mut seen = HashSet::new();
    for (row, record) in rdr.records().enumerate() {
        summary.rows_read += 1;
        let record = match record {
            Ok(r) if r.len() == headers.len() => r,
            _ => {
                summary.skipped_malformed += 1;
                continue;
            }
        };
        let code = record.get(code_col).unwrap_or_default();
        if code.trim().is_empty() {
            summary.skipped_empty_code += 1;
            continue;
        }
        let Some(label) = parse_label(record.get(label_col).unwrap_or_default()) else {
            summary.skipped_bad_label += 1;
            continue;
        };
        let id = match id_col {
            Some(c) => record.get(c).unwrap_or_default().trim().to_string(),
            None => format!("row-{}", row + 1),
        };
        if id.is_empty() || !seen.insert(id.clone()) {
            summary.skipped_duplicate_id += 1;
            continue;
        }
        let field = |col: Option<usize>| non_empty(col.and_then(|c| record.get(c)));
        samples.push(CodeSample {
            id,
            code: code.to_string(),
            label,
            cwe_id: field(cwe_col),
            vuln_name: field(name_col),
            description: field(desc_col),
            split: Split::Unassigned,
        });
    }
    summary.accepted = samples.len();
    if samples.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    Ok(Ingested { samples, summary })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub total: usize,
    pub vul: usize,
    pub non_vul: usize,
    pub vul_ratio: f64,
}

pub fn corpus_stats(samples: &[CodeSample]) -> CorpusStats {
    let total = samples.len();
    let vul = samples.iter().filter(|s| s.is_vulnerable()).count();
    CorpusStats {
        total,
        vul,
        non_vul: total - vul,
        vul_ratio: if total == 0 {
            0.0
        } else {
            vul as f64 / total as f64
        },
    }
}

/// ChaCha stream ids, so the test draw and the knowledge-base draw are
/// independent streams of the same seed.
const TEST_STREAM: u64 = 0;
const KB_STREAM: u64 = 1;

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Partial Fisher-Yates: the first `need` slots of `pool` become a uniform
/// random sample without replacement.
fn partial_shuffle<T>(pool: &mut [T], need: usize, rng: &mut ChaCha8Rng) {
    for i in 0..need.min(pool.len()) {
        let j = rng.gen_range(i..pool.len());
        pool.swap(i, j);
    }
}

/// Draws `n_total / 2` samples of each label uniformly without replacement.
/// The result keeps corpus order and every returned sample has
/// `split = Test`.
pub fn balanced_sample(
    samples: &[CodeSample],
    n_total: usize,
    seed: u64,
) -> Result<Vec<CodeSample>, CorpusError> {
    if !n_total.is_multiple_of(2) {
        return Err(CorpusError::OddTestSize(n_total));
    }
    let need = n_total / 2;
    let mut rng = rng_for(seed, TEST_STREAM);
    let mut chosen = Vec::with_capacity(n_total);
    for label in [1u8, 0u8] {
        let mut pool: Vec<usize> = (0..samples.len())
            .filter(|&i| samples[i].label == label)
            .collect();
        if pool.len() < need {
            return Err(CorpusError::InsufficientClass {
                label,
                have: pool.len(),
                need,
            });
        }
        partial_shuffle(&mut pool, need, &mut rng);
        chosen.extend_from_slice(&pool[..need]);
    }
    chosen.sort_unstable();
    Ok(chosen
        .into_iter()
        .map(|i| CodeSample {
            split: Split::Test,
            ..samples[i].clone()
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct KbSelection {
    pub samples: Vec<CodeSample>,
    /// Set when fewer than `k` eligible samples existed.
    pub warning: Option<String>,
}

/// Picks `min(k, available)` vulnerable samples that are not in `test_set`.
pub fn select_knowledge_base(
    samples: &[CodeSample],
    test_set: &[CodeSample],
    k: usize,
    seed: u64,
) -> Result<KbSelection, CorpusError> {
    if k == 0 {
        return Err(CorpusError::InvalidKbSize);
    }
    let test_ids: HashSet<&str> = test_set.iter().map(|s| s.id.as_str()).collect();
    let mut pool: Vec<usize> = (0..samples.len())
        .filter(|&i| samples[i].is_vulnerable() && !test_ids.contains(samples[i].id.as_str()))
        .collect();
    if pool.is_empty() {
        return Err(CorpusError::NoVulnerableSamples);
    }
    let take = k.min(pool.len());
    let warning = (take < k).then(|| {
        let msg = format!(
            "requested {k} knowledge-base entries but only {} eligible; using all",
            pool.len()
        );
        log::warn!("{msg}");
        msg
    });
    let mut rng = rng_for(seed, KB_STREAM);
    partial_shuffle(&mut pool, take, &mut rng);
    let mut chosen = pool[..take].to_vec();
    chosen.sort_unstable();
    Ok(KbSelection {
        samples: chosen
            .into_iter()
            .map(|i| CodeSample {
                split: Split::KnowledgeBase,
                ..samples[i].clone()
            })
            .collect(),
        warning,
    })
}
