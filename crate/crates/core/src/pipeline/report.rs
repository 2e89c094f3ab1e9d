use super::{
    metrics_for, PipelineConfig, PipelineError, Providers, RerankStatus, SampleResult,
    FALLBACK_LABEL,
};
use crate::corpus::CodeSample;
use crate::hashing::sha256_hex;
use crate::llm::ParseStatus;
use crate::metrics::{markdown_table, percent, MetricsReport, CITED_BASELINES};
use crate::vstore::VectorStore;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write;

/// `(row label, file slug, rag, cot)` in report row order.
pub const ABLATION_CELLS: [(&str, &str, bool, bool); 4] = [
    ("RAG + CoT", "rag-cot", true, true),
    ("No RAG", "no-rag", false, true),
    ("No CoT", "no-cot", true, false),
    ("No RAG & CoT", "no-rag-no-cot", false, false),
];

/// Everything needed to reproduce an experiment cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentMeta {
    pub cell: Option<String>,
    pub config: PipelineConfig,
    pub seed: u64,
    pub fallback_label: u8,
    pub template_hashes: BTreeMap<String, String>,
    pub llm_provider: String,
    pub embedder: String,
    pub store_checksum: String,
    pub store_size: usize,
    pub store_dim: usize,
    pub test_set_size: usize,
    /// SHA-256 over the test-set ids in input order, newline separated.
    pub test_set_sha256: String,
}

impl ExperimentMeta {
    pub(crate) fn new(
        cell: Option<&str>,
        config: &PipelineConfig,
        providers: &Providers<'_>,
        store: &VectorStore,
        test_set: &[CodeSample],
    ) -> Result<Self, PipelineError> {
        let ids: Vec<&str> = test_set.iter().map(|s| s.id.as_str()).collect();
        Ok(Self {
            cell: cell.map(str::to_string),
            config: config.clone(),
            seed: config.seed,
            fallback_label: FALLBACK_LABEL,
            template_hashes: providers.templates.hashes(),
            llm_provider: providers.llm.describe(),
            embedder: providers.embedder.describe(),
            store_checksum: format!("{:016x}", store.checksum()?),
            store_size: store.len(),
            store_dim: store.dim(),
            test_set_size: test_set.len(),
            test_set_sha256: sha256_hex(ids.join("\n")),
        })
    }

    /// Identity of the setup (parallelism is not part of it); keys the
    /// journal.
    pub fn fingerprint(&self) -> String {
        sha256_hex(serde_json::to_vec(self).expect("meta serializes"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub meta: ExperimentMeta,
    pub metrics: MetricsReport,
    pub n_samples: usize,
    pub parse_fallbacks: usize,
    pub rerank_fallbacks: usize,
}

impl ExperimentReport {
    pub fn new(meta: ExperimentMeta, results: &[SampleResult]) -> Result<Self, PipelineError> {
        Ok(Self {
            metrics: metrics_for(results)?,
            n_samples: results.len(),
            parse_fallbacks: results
                .iter()
                .filter(|r| r.parse_status == ParseStatus::Fallback)
                .count(),
            rerank_fallbacks: results
                .iter()
                .filter(|r| r.rerank_status == Some(RerankStatus::Fallback))
                .count(),
            meta,
        })
    }

    pub fn row_label(&self) -> String {
        self.meta.cell.clone().unwrap_or_else(|| {
            let c = &self.meta.config;
            match (c.rag_enabled, c.cot_enabled) {
                (true, true) => "RAG + CoT",
                (false, true) => "No RAG",
                (true, false) => "No CoT",
                (false, false) => "No RAG & CoT",
            }
            .to_string()
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Markdown table in the `Accuracy | Precision | Recall | F1 Score`
    /// layout, optionally preceded by the cited baseline rows.
    pub fn to_markdown(&self, with_baselines: bool) -> String {
        let mut rows = Vec::new();
        if with_baselines {
            rows.extend(
                CITED_BASELINES
                    .iter()
                    .map(|b| (format!("{} (cited)", b.system), b.as_row())),
            );
        }
        rows.push((self.row_label(), self.metrics.as_row()));
        let mut out = String::from("## Overall Performance\n\n");
        out.push_str(&markdown_table("System", &rows));
        let c = &self.metrics.counts;
        let _ = write!(
            out,
            "\nSamples: {} (TP {}, FP {}, TN {}, FN {}). Predicted vulnerable: {}%. Parse fallbacks: {} ({}%).\n",
            self.n_samples,
            c.tp,
            c.fp,
            c.tn,
            c.fn_,
            percent(self.metrics.predicted_positive_rate),
            self.parse_fallbacks,
            percent(self.metrics.parse_fallback_rate),
        );
        if with_baselines {
            out.push_str(
                "\nRows marked (cited) are published figures, not produced by this run.\n",
            );
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub name: String,
    pub rag_enabled: bool,
    pub cot_enabled: bool,
    pub report: ExperimentReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub cells: Vec<AblationCell>,
}

impl AblationReport {
    pub fn cell(&self, name: &str) -> Option<&AblationCell> {
        self.cells.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Four rows (RAG + CoT, No RAG, No CoT, No RAG & CoT) by four metrics.
    pub fn to_markdown(&self) -> String {
        let rows: Vec<_> = self
            .cells
            .iter()
            .map(|c| (c.name.clone(), c.report.metrics.as_row()))
            .collect();
        let mut out = String::from("## Variable Test\n\n");
        out.push_str(&markdown_table("Variables", &rows));
        out
    }
}
