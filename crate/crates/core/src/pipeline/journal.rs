//! Append-only results journal for resumable experiments.
//!
//! Line 1: `{"journal":1,"fingerprint":"<sha256>"}`. Every further line is one
//! [`SampleResult`]. A partially written final line (from an interrupted run)
//! is ignored on reopen.

use super::{PipelineError, SampleResult};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

#[derive(Debug, Serialize, Deserialize)]
struct JournalHeader {
    journal: u32,
    fingerprint: String,
}

pub struct Journal {
    path: PathBuf,
    completed: HashMap<String, SampleResult>,
    writer: Mutex<BufWriter<File>>,
}

fn journal_err(path: &Path, msg: impl std::fmt::Display) -> PipelineError {
    PipelineError::Journal(format!("{}: {msg}", path.display()))
}

impl Journal {
    /// Opens or creates the journal at `path`. An existing journal must carry
    /// the same `fingerprint`, i.e. come from the same experiment setup.
    pub fn open(path: &Path, fingerprint: &str) -> Result<Self, PipelineError> {
        let mut completed = HashMap::new();
        let mut torn = false;
        let exists = path.exists()
            && std::fs::metadata(path)
                .map(|m| m.len() > 0)
                .unwrap_or(false);
        if exists {
            let file = File::open(path).map_err(|e| journal_err(path, e))?;
            let mut lines = BufReader::new(file).lines();
            let header: JournalHeader = match lines.next() {
                Some(Ok(l)) => serde_json::from_str(&l).map_err(|e| journal_err(path, e))?,
                _ => return Err(journal_err(path, "missing header")),
            };
            if header.fingerprint != fingerprint {
                return Err(journal_err(
                    path,
                    "journal belongs to a different experiment configuration",
                ));
            }
            let rest: Vec<String> = lines
                .collect::<Result<_, _>>()
                .map_err(|e| journal_err(path, e))?;
            let last = rest.len().saturating_sub(1);
            for (i, line) in rest.iter().enumerate() {
                match serde_json::from_str::<SampleResult>(line) {
                    Ok(r) => {
                        completed.insert(r.sample_id.clone(), r);
                    }
                    Err(_) if i == last => {
                        log::warn!("ignoring truncated final journal line");
                        torn = true;
                    }
                    Err(e) => return Err(journal_err(path, format!("line {}: {e}", i + 2))),
                }
            }
        }
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| journal_err(path, e))?;
        if !exists {
            let header = serde_json::to_string(&JournalHeader {
                journal: 1,
                fingerprint: fingerprint.to_string(),
            })
            .map_err(|e| journal_err(path, e))?;
            writeln!(file, "{header}").map_err(|e| journal_err(path, e))?;
        } else {
            // drop a torn last line so the next append starts cleanly
            let bytes = std::fs::read(path).map_err(|e| journal_err(path, e))?;
            if bytes.last() != Some(&b'\n') {
                if torn {
                    let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
                    file.set_len(keep as u64)
                        .map_err(|e| journal_err(path, e))?;
                } else {
                    writeln!(file).map_err(|e| journal_err(path, e))?;
                }
            }
        }
        Ok(Self {
            path: path.to_path_buf(),
            completed,
            writer: Mutex::new(BufWriter::new(file)),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Results recorded by earlier runs, keyed by sample id.
    pub fn completed(&self) -> &HashMap<String, SampleResult> {
        &self.completed
    }

    pub fn append(&self, result: &SampleResult) -> Result<(), PipelineError> {
        let line = serde_json::to_string(result).map_err(|e| journal_err(&self.path, e))?;
        let mut w = self.writer.lock().unwrap_or_else(|p| p.into_inner());
        writeln!(w, "{line}")
            .and_then(|_| w.flush())
            .map_err(|e| journal_err(&self.path, e))
    }
}
