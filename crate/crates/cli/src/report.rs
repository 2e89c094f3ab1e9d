//! Run manifests and report files.

use crate::config::Layer;
use anyhow::{Context, Result};
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};
use vulnrag_core::hashing::sha256_hex;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputFile {
    pub path: PathBuf,
    pub sha256: String,
}

impl InputFile {
    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(Self {
            path: path.to_path_buf(),
            sha256: sha256_hex(bytes),
        })
    }
}

/// What produced a report. Wall-clock times are kept out of it (they go to
/// the `.timing.json` sidecar) so equal manifests give byte-equal reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub command: String,
    pub settings: Layer,
    pub split_seed: Option<u64>,
    pub pipeline_seed: u64,
    pub template_hashes: BTreeMap<String, String>,
    pub llm_provider: String,
    pub embedder: String,
    pub inputs: BTreeMap<String, InputFile>,
}

impl RunManifest {
    pub fn tool() -> String {
        format!("vulnrag {}", env!("CARGO_PKG_VERSION"))
    }
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    manifest: &'a RunManifest,
    #[serde(flatten)]
    body: T,
}

#[derive(Serialize)]
struct Timing {
    command: String,
    started_unix_ms: u128,
    finished_unix_ms: u128,
    elapsed_ms: u128,
}

pub struct Clock {
    started_wall: SystemTime,
    started: Instant,
}

impl Clock {
    pub fn start() -> Self {
        Self {
            started_wall: SystemTime::now(),
            started: Instant::now(),
        }
    }
}

fn unix_ms(t: SystemTime) -> u128 {
    t.duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

fn sibling(out: &Path, ext: &str) -> PathBuf {
    out.with_extension(ext)
}

/// Writes `<out>` (JSON: manifest plus `body`), `<out>.md` and the timing
/// sidecar `<out>.timing.json`. Returns the paths written.
pub fn write_report<T: Serialize>(
    out: &Path,
    manifest: &RunManifest,
    body: T,
    markdown: &str,
    clock: &Clock,
) -> Result<Vec<PathBuf>> {
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut json = serde_json::to_string_pretty(&Envelope { manifest, body })?;
    json.push('\n');
    std::fs::write(out, json).with_context(|| format!("writing {}", out.display()))?;

    let md_path = sibling(out, "md");
    let md = format!(
        "{markdown}\nRun: `{}` with {} and {}, seed {}.\n",
        manifest.command, manifest.llm_provider, manifest.embedder, manifest.pipeline_seed
    );
    std::fs::write(&md_path, md).with_context(|| format!("writing {}", md_path.display()))?;

    let timing_path = sibling(out, "timing.json");
    let finished = SystemTime::now();
    let timing = Timing {
        command: manifest.command.clone(),
        started_unix_ms: unix_ms(clock.started_wall),
        finished_unix_ms: unix_ms(finished),
        elapsed_ms: clock.started.elapsed().as_millis(),
    };
    std::fs::write(&timing_path, serde_json::to_string_pretty(&timing)? + "\n")
        .with_context(|| format!("writing {}", timing_path.display()))?;
    Ok(vec![out.to_path_buf(), md_path, timing_path])
}

/// `1234567` as `1,234,567`.
pub fn thousands(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thousands_separators() {
        assert_eq!(thousands(0), "0");
        assert_eq!(thousands(999), "999");
        assert_eq!(thousands(1000), "1,000");
        assert_eq!(thousands(179_299), "179,299");
        assert_eq!(thousands(1_234_567), "1,234,567");
    }

    #[test]
    fn sidecars_sit_next_to_the_report() {
        assert_eq!(
            sibling(Path::new("out/eval.json"), "md"),
            Path::new("out/eval.md")
        );
        assert_eq!(
            sibling(Path::new("out/eval.json"), "timing.json"),
            Path::new("out/eval.timing.json")
        );
    }
}
