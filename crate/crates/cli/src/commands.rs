use crate::config::{self, PipelineArgs, ProviderArgs, Resolved};
use crate::report::{thousands, write_report, Clock, InputFile, RunManifest};
use anyhow::{bail, Context, Result};
use clap::Args;
use serde::Serialize;
use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};
use vulnrag_core::corpus::CorpusManifest;
use vulnrag_core::pipeline::{detect, run_ablation_grid, run_experiment};
use vulnrag_core::{
    ChatProvider, CodeSample, ColumnMap, Embedder, EmbedderKind, KnowledgeEntry, PipelineError,
    Providers, TemplateSet, VectorStore,
};

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Delimiter-separated dataset with a header row.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Where to write the corpus manifest (JSON).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "func_before")]
    pub code_col: String,
    #[arg(long, default_value = "vul")]
    pub label_col: String,
    /// Column holding row ids; rows are numbered `row-<n>` without one.
    #[arg(long)]
    pub id_col: Option<String>,
    #[arg(long, default_value = "CWE ID")]
    pub cwe_col: String,
    #[arg(long, default_value = "Vulnerability Classification")]
    pub name_col: String,
    #[arg(long, default_value = "Summary")]
    pub desc_col: String,
    #[arg(long, default_value_t = ',')]
    pub delimiter: char,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Corpus manifest written by `ingest`.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Balanced test-set size (half vulnerable, half not).
    #[arg(long, default_value_t = 5000)]
    pub n_test: usize,
    /// Vulnerable samples drawn into the knowledge base.
    #[arg(long, default_value_t = 500)]
    pub kb_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output manifest; defaults to updating `--manifest` in place.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    /// Corpus manifest written by `ingest`.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Vector-store file to write.
    #[arg(long)]
    pub store: PathBuf,
    #[command(flatten)]
    pub providers: ProviderArgs,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// File with one C/C++ function, or `-` for stdin.
    #[arg(long)]
    pub snippet: PathBuf,
    /// Vector-store file; required unless retrieval is disabled.
    #[arg(long)]
    pub store: Option<PathBuf>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[command(flatten)]
    pub providers: ProviderArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Corpus manifest written by `ingest`.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub store: PathBuf,
    /// JSON report path; the Markdown table goes beside it as `.md`.
    #[arg(long)]
    pub out: PathBuf,
    /// Add the cited VulDeePecker and Reveal rows to the Markdown table.
    #[arg(long)]
    pub with_baselines: bool,
    /// Results journal; an interrupted run resumes from it.
    #[arg(long)]
    pub journal: Option<PathBuf>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[command(flatten)]
    pub providers: ProviderArgs,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Corpus manifest written by `ingest`.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Directory for one journal per ablation cell.
    #[arg(long)]
    pub journal_dir: Option<PathBuf>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[command(flatten)]
    pub providers: ProviderArgs,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// CSV file to write, with Big-Vul column names plus `id`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub vulnerable: usize,
    #[arg(long, default_value_t = 200)]
    pub clean: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn ingest(args: &IngestArgs) -> Result<()> {
    let columns = ColumnMap {
        id: args.id_col.clone(),
        code: args.code_col.clone(),
        label: args.label_col.clone(),
        cwe_id: Some(args.cwe_col.clone()),
        vuln_name: Some(args.name_col.clone()),
        description: Some(args.desc_col.clone()),
        delimiter: args.delimiter,
    };
    let (manifest, ingested) = CorpusManifest::create(&args.dataset, &columns)?;
    manifest.save(&args.out)?;

    let s = &manifest.stats;
    let name = args.dataset.file_stem().map_or_else(
        || "dataset".to_string(),
        |n| n.to_string_lossy().into_owned(),
    );
    println!("| Dataset | Total | Vul | Non-Vul | Vul Ratio |");
    println!("|---|---:|---:|---:|---:|");
    println!(
        "| {name} | {} | {} | {} | {:.2}% |",
        thousands(s.total),
        thousands(s.vul),
        thousands(s.non_vul),
        s.vul_ratio * 100.0
    );
    let sum = &ingested.summary;
    eprintln!(
        "read {} rows, accepted {}, skipped {} (empty code {}, bad label {}, malformed {}, duplicate id {}); manifest -> {}",
        thousands(sum.rows_read),
        thousands(sum.accepted),
        thousands(sum.skipped()),
        sum.skipped_empty_code,
        sum.skipped_bad_label,
        sum.skipped_malformed,
        sum.skipped_duplicate_id,
        args.out.display()
    );
    Ok(())
}

pub fn split(args: &SplitArgs) -> Result<()> {
    let mut manifest = CorpusManifest::load(&args.manifest)?;
    let samples = manifest.reingest()?;
    manifest.assign_split(&samples, args.n_test, args.kb_size, args.seed)?;
    let out = args.out.as_ref().unwrap_or(&args.manifest);
    manifest.save(out)?;
    let split = manifest.split.as_ref().expect("split assigned");
    for w in &split.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "test set: {} ({} vulnerable, {} not); knowledge base: {} of {} requested; seed {} -> {}",
        thousands(split.test_ids.len()),
        thousands(split.test_vul),
        thousands(split.test_non_vul),
        thousands(split.kb_count),
        thousands(split.kb_requested),
        split.seed,
        out.display()
    );
    Ok(())
}

fn embed_cache_path(store: &Path) -> PathBuf {
    let mut name = store.file_name().unwrap_or_default().to_os_string();
    name.push(".embcache.jsonl");
    store.with_file_name(name)
}

fn build_embedder(r: &Resolved, store: Option<&Path>) -> Result<Box<dyn Embedder>> {
    let cache = match (r.embedder.kind, store) {
        (EmbedderKind::Remote, Some(s)) => Some(embed_cache_path(s)),
        _ => None,
    };
    Ok(r.embedder
        .build(config::embed_api_key(), cache.as_deref())?)
}

fn build_llm(r: &Resolved) -> Result<Box<dyn ChatProvider>> {
    Ok(r.llm.build(config::llm_api_key())?)
}

fn templates(r: &Resolved) -> Result<TemplateSet> {
    Ok(match &r.templates_dir {
        Some(dir) => TemplateSet::load_dir(dir)?,
        None => TemplateSet::builtin(),
    })
}

pub fn index(args: &IndexArgs, config_file: Option<&Path>) -> Result<()> {
    let r = config::resolve(args.providers.layer(), config_file)?;
    let manifest = CorpusManifest::load(&args.manifest)?;
    let samples = manifest.reingest()?;
    let (_, kb) = manifest.split_samples(&samples)?;
    let embedder = build_embedder(&r, Some(&args.store))?;

    let mut entries = Vec::with_capacity(kb.len());
    for (i, s) in kb.iter().enumerate() {
        let v = vulnrag_core::embed::embed_text(&s.code, embedder.as_ref())
            .with_context(|| format!("embedding knowledge-base sample {}", s.id))?;
        entries.push(KnowledgeEntry::from_sample(s, v));
        if (i + 1) % 100 == 0 {
            log::info!("embedded {}/{}", i + 1, kb.len());
        }
    }
    if entries.is_empty() {
        eprintln!("warning: knowledge base is empty; writing an empty store");
    }
    let store = VectorStore::build_with_dim(embedder.dim(), entries)?;
    store.save(&args.store)?;
    let reloaded = VectorStore::load(&args.store).context("reloading the written store")?;
    if reloaded.len() != store.len() || reloaded.dim() != store.dim() {
        bail!("store {} did not reload intact", args.store.display());
    }
    println!(
        "indexed {} entries (dim {}, {}) -> {}",
        thousands(store.len()),
        store.dim(),
        embedder.describe(),
        args.store.display()
    );
    Ok(())
}

fn load_store(path: Option<&Path>, dim: usize) -> Result<VectorStore> {
    match path {
        Some(p) => Ok(VectorStore::load(p)?),
        None => Ok(VectorStore::build_with_dim(dim, Vec::new())?),
    }
}

pub fn detect_cmd(args: &DetectArgs, config_file: Option<&Path>) -> Result<()> {
    let layer = args.pipeline.layer().over(args.providers.layer());
    let r = config::resolve(layer, config_file)?;
    if r.pipeline.rag_enabled && args.store.is_none() {
        bail!("--store is required unless --no-rag is given");
    }
    let (id, code) = if args.snippet.as_os_str() == "-" {
        let mut code = String::new();
        std::io::stdin().read_to_string(&mut code)?;
        ("stdin".to_string(), code)
    } else {
        let code = std::fs::read_to_string(&args.snippet)
            .with_context(|| format!("reading snippet {}", args.snippet.display()))?;
        let id = args.snippet.file_name().map_or_else(
            || "snippet".to_string(),
            |n| n.to_string_lossy().into_owned(),
        );
        (id, code)
    };
    let embedder = build_embedder(&r, args.store.as_deref())?;
    let store = load_store(args.store.as_deref(), embedder.dim())?;
    let llm = build_llm(&r)?;
    let templates = templates(&r)?;
    let providers = Providers {
        embedder: embedder.as_ref(),
        llm: llm.as_ref(),
        templates: &templates,
    };
    let result = detect(&id, &code, None, &store, &r.pipeline, &providers)?;
    println!("{}", serde_json::to_string(&result)?);
    Ok(())
}

/// Everything evaluate and ablate share.
struct Prepared {
    resolved: Resolved,
    test: Vec<CodeSample>,
    store: VectorStore,
    manifest: RunManifest,
    embedder: Box<dyn Embedder>,
    llm: Box<dyn ChatProvider>,
    templates: TemplateSet,
}

fn prepare(
    command: &str,
    manifest_path: &Path,
    store_path: &Path,
    pipeline: &PipelineArgs,
    providers: &ProviderArgs,
    config_file: Option<&Path>,
) -> Result<Prepared> {
    let corpus = CorpusManifest::load(manifest_path)?;
    let split_seed = corpus.split.as_ref().map(|s| s.seed);
    // the pipeline seed follows the split seed unless set explicitly
    let fallback = config::Layer {
        seed: split_seed,
        ..config::Layer::default()
    };
    let resolved = config::resolve_with(
        pipeline.layer().over(providers.layer()),
        config_file,
        fallback,
    )?;
    let samples = corpus.reingest()?;
    let (test, _) = corpus.split_samples(&samples)?;
    if test.is_empty() {
        return Err(PipelineError::EmptyTestSet.into());
    }
    let store = VectorStore::load(store_path)?;
    let embedder = build_embedder(&resolved, Some(store_path))?;
    let llm = build_llm(&resolved)?;
    let templates = templates(&resolved)?;

    let mut inputs = BTreeMap::new();
    inputs.insert(
        "corpus_manifest".to_string(),
        InputFile::read(manifest_path)?,
    );
    inputs.insert(
        "dataset".to_string(),
        InputFile {
            path: corpus.source.clone(),
            sha256: corpus.source_sha256.clone(),
        },
    );
    inputs.insert("store".to_string(), InputFile::read(store_path)?);
    let manifest = RunManifest {
        tool: RunManifest::tool(),
        command: command.to_string(),
        // thread count does not change results, so it stays out of reports
        settings: config::Layer {
            parallelism: None,
            ..resolved.snapshot.clone()
        },
        split_seed,
        pipeline_seed: resolved.pipeline.seed,
        template_hashes: templates.hashes(),
        llm_provider: llm.describe(),
        embedder: embedder.describe(),
        inputs,
    };
    Ok(Prepared {
        resolved,
        test,
        store,
        manifest,
        embedder,
        llm,
        templates,
    })
}

pub fn evaluate(args: &EvaluateArgs, config_file: Option<&Path>) -> Result<()> {
    let clock = Clock::start();
    let p = prepare(
        "evaluate",
        &args.manifest,
        &args.store,
        &args.pipeline,
        &args.providers,
        config_file,
    )?;
    let providers = Providers {
        embedder: p.embedder.as_ref(),
        llm: p.llm.as_ref(),
        templates: &p.templates,
    };
    let exp = run_experiment(
        &p.test,
        &p.store,
        &p.resolved.pipeline,
        &providers,
        args.journal.as_deref(),
        None,
    )?;

    #[derive(Serialize)]
    struct Body<'a> {
        report: &'a vulnrag_core::ExperimentReport,
    }
    let md = exp.report.to_markdown(args.with_baselines);
    let written = write_report(
        &args.out,
        &p.manifest,
        Body {
            report: &exp.report,
        },
        &md,
        &clock,
    )?;
    print!("{md}");
    for w in written {
        eprintln!("wrote {}", w.display());
    }
    Ok(())
}

pub fn ablate(args: &AblateArgs, config_file: Option<&Path>) -> Result<()> {
    let clock = Clock::start();
    let p = prepare(
        "ablate",
        &args.manifest,
        &args.store,
        &args.pipeline,
        &args.providers,
        config_file,
    )?;
    let providers = Providers {
        embedder: p.embedder.as_ref(),
        llm: p.llm.as_ref(),
        templates: &p.templates,
    };
    if let Some(dir) = &args.journal_dir {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let (_, ablation) = run_ablation_grid(
        &p.test,
        &p.store,
        &p.resolved.pipeline,
        &providers,
        args.journal_dir.as_deref(),
    )?;

    #[derive(Serialize)]
    struct Body<'a> {
        ablation: &'a vulnrag_core::AblationReport,
    }
    let md = ablation.to_markdown();
    let written = write_report(
        &args.out,
        &p.manifest,
        Body {
            ablation: &ablation,
        },
        &md,
        &clock,
    )?;
    print!("{md}");
    for w in written {
        eprintln!("wrote {}", w.display());
    }
    Ok(())
}

pub fn synth(args: &SynthArgs) -> Result<()> {
    let samples = vulnrag_core::synthetic::planted_corpus(args.vulnerable, args.clean, args.seed);
    vulnrag_core::synthetic::write_csv(&samples, &args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;
    println!(
        "wrote {} functions ({} vulnerable) -> {}",
        thousands(samples.len()),
        thousands(args.vulnerable),
        args.out.display()
    );
    Ok(())
}
