//! Drives the `vulnrag` binary end to end on synthetic data.

use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use vulnrag_core::corpus::{corpus_stats, ingest, ColumnMap};

fn vulnrag(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vulnrag"))
        .args(args)
        .env_remove("VULNRAG_API_KEY")
        .env_remove("VULNRAG_LLM_ENDPOINT")
        .env_remove("VULNRAG_LLM_MODEL")
        .env_remove("VULNRAG_EMBED_ENDPOINT")
        .env_remove("VULNRAG_EMBED_MODEL")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = vulnrag(args);
    assert!(
        out.status.success(),
        "vulnrag {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Synthetic dataset, manifest with split, and an indexed store.
struct Workspace {
    _dir: tempfile::TempDir,
    root: PathBuf,
    csv: PathBuf,
    manifest: PathBuf,
    store: PathBuf,
}

fn workspace(vulnerable: usize, clean: usize, n_test: usize, kb: usize) -> Workspace {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let csv = root.join("synth.csv");
    let manifest = root.join("manifest.json");
    let store = root.join("kb.jsonl");
    ok(&[
        "synth",
        "--out",
        s(&csv),
        "--vulnerable",
        &vulnerable.to_string(),
        "--clean",
        &clean.to_string(),
        "--seed",
        "3",
    ]);
    ok(&[
        "ingest",
        "--dataset",
        s(&csv),
        "--out",
        s(&manifest),
        "--id-col",
        "id",
    ]);
    ok(&[
        "split",
        "--manifest",
        s(&manifest),
        "--n-test",
        &n_test.to_string(),
        "--kb-size",
        &kb.to_string(),
        "--seed",
        "11",
    ]);
    ok(&["index", "--manifest", s(&manifest), "--store", s(&store)]);
    Workspace {
        _dir: dir,
        root,
        csv,
        manifest,
        store,
    }
}

#[test]
fn ingest_prints_table_with_thousands_separators() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("big.csv");
    let manifest = dir.path().join("m.json");
    ok(&[
        "synth",
        "--out",
        s(&csv),
        "--vulnerable",
        "100",
        "--clean",
        "1134",
    ]);
    let table = ok(&[
        "ingest",
        "--dataset",
        s(&csv),
        "--out",
        s(&manifest),
        "--id-col",
        "id",
    ]);
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "| Dataset | Total | Vul | Non-Vul | Vul Ratio |");
    assert_eq!(lines[2], "| big | 1,234 | 100 | 1,134 | 8.10% |");

    // printed stats agree with the library
    let cols = ColumnMap {
        id: Some("id".into()),
        ..ColumnMap::default()
    };
    let stats = corpus_stats(&ingest(&csv, &cols).unwrap().samples);
    let m: Value = serde_json::from_str(&std::fs::read_to_string(&manifest).unwrap()).unwrap();
    assert_eq!(m["stats"]["total"], stats.total);
    assert_eq!(m["stats"]["vul"], stats.vul);
}

#[test]
fn missing_dataset_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = vulnrag(&[
        "ingest",
        "--dataset",
        "/no/such/file.csv",
        "--out",
        s(&dir.path().join("m.json")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/no/such/file.csv"));
}

#[test]
fn split_is_reproducible_and_validated() {
    let w = workspace(20, 30, 10, 5);
    let again = w.root.join("again.json");
    ok(&[
        "split",
        "--manifest",
        s(&w.manifest),
        "--n-test",
        "10",
        "--kb-size",
        "5",
        "--seed",
        "11",
        "--out",
        s(&again),
    ]);
    assert_eq!(
        std::fs::read(&w.manifest).unwrap(),
        std::fs::read(&again).unwrap()
    );

    let m: Value = serde_json::from_str(&std::fs::read_to_string(&w.manifest).unwrap()).unwrap();
    assert_eq!(m["split"]["test_vul"], 5);
    assert_eq!(m["split"]["test_non_vul"], 5);
    assert_eq!(m["split"]["kb_ids"].as_array().unwrap().len(), 5);

    let empty = w.root.join("empty.json");
    ok(&[
        "split",
        "--manifest",
        s(&w.manifest),
        "--n-test",
        "0",
        "--kb-size",
        "5",
        "--out",
        s(&empty),
    ]);
    let m: Value = serde_json::from_str(&std::fs::read_to_string(&empty).unwrap()).unwrap();
    assert_eq!(m["split"]["test_ids"].as_array().unwrap().len(), 0);

    let out = vulnrag(&[
        "split",
        "--manifest",
        s(&w.manifest),
        "--n-test",
        "100",
        "--out",
        s(&empty),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("need 50"));
}

#[test]
fn index_writes_a_loadable_store() {
    let w = workspace(20, 30, 10, 8);
    let header = std::fs::read_to_string(&w.store).unwrap();
    let header: Value = serde_json::from_str(header.lines().next().unwrap()).unwrap();
    assert_eq!(header["count"], 8);
    assert_eq!(header["dim"], 256);
    assert_eq!(vulnrag_core::VectorStore::load(&w.store).unwrap().len(), 8);
}

#[test]
fn detect_prints_one_json_result() {
    let w = workspace(40, 40, 20, 20);
    let snippet = w.root.join("f.c");
    std::fs::write(
        &snippet,
        "int f(char *s) {\n    char b[8];\n    strcpy(b, s);\n    return 0;\n}\n",
    )
    .unwrap();
    let config = w.root.join("scripted.toml");
    std::fs::write(
        &config,
        "llm = \"scripted\"\ndefault_response = \"VERDICT: 1\"\n",
    )
    .unwrap();

    let out = ok(&[
        "detect",
        "--config",
        s(&config),
        "--snippet",
        s(&snippet),
        "--store",
        s(&w.store),
    ]);
    assert_eq!(out.lines().count(), 1);
    let r: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(r["predicted_label"], 1);
    assert_eq!(r["sample_id"], "f.c");
    assert_eq!(r["retrieval"].as_array().unwrap().len(), 5);

    let out = ok(&[
        "detect",
        "--config",
        s(&config),
        "--snippet",
        s(&snippet),
        "--no-rag",
    ]);
    let r: Value = serde_json::from_str(&out).unwrap();
    assert!(r.get("retrieval").is_none());

    // a planted vulnerable function from the dataset itself, heuristic provider
    let cols = ColumnMap {
        id: Some("id".into()),
        ..ColumnMap::default()
    };
    let samples = ingest(&w.csv, &cols).unwrap().samples;
    let m: Value = serde_json::from_str(&std::fs::read_to_string(&w.manifest).unwrap()).unwrap();
    let test_ids: Vec<&str> = m["split"]["test_ids"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    for label in [0u8, 1] {
        let sample = samples
            .iter()
            .find(|x| x.label == label && test_ids.contains(&x.id.as_str()))
            .unwrap();
        let path = w.root.join(format!("planted{label}.c"));
        std::fs::write(&path, &sample.code).unwrap();
        let out = ok(&[
            "detect",
            "--llm",
            "heuristic",
            "--snippet",
            s(&path),
            "--store",
            s(&w.store),
        ]);
        let r: Value = serde_json::from_str(&out).unwrap();
        assert_eq!(r["predicted_label"], label, "{}", sample.id);
    }
}

#[test]
fn detect_without_store_needs_no_rag() {
    let dir = tempfile::tempdir().unwrap();
    let snippet = dir.path().join("f.c");
    std::fs::write(&snippet, "int f(void) { return 0; }").unwrap();
    let out = vulnrag(&["detect", "--llm", "heuristic", "--snippet", s(&snippet)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--store"));
}

#[test]
fn unreachable_provider_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let snippet = dir.path().join("f.c");
    std::fs::write(&snippet, "int f(void) { return 0; }").unwrap();
    let out = vulnrag(&[
        "detect",
        "--no-rag",
        "--snippet",
        s(&snippet),
        "--llm",
        "remote",
        "--llm-endpoint",
        "http://127.0.0.1:9/v1/chat/completions",
        "--llm-model",
        "test-model",
        "--max-retries",
        "0",
    ]);
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn remote_without_endpoint_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let snippet = dir.path().join("f.c");
    std::fs::write(&snippet, "int f(void) { return 0; }").unwrap();
    let out = vulnrag(&["detect", "--no-rag", "--snippet", s(&snippet)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("endpoint"));
}

#[test]
fn evaluate_writes_reports_and_is_parallelism_invariant() {
    let w = workspace(60, 60, 40, 20);
    let one = w.root.join("eval1.json");
    let four = w.root.join("eval4.json");
    let md = ok(&[
        "evaluate",
        "--llm",
        "heuristic",
        "--manifest",
        s(&w.manifest),
        "--store",
        s(&w.store),
        "--out",
        s(&one),
        "--with-baselines",
    ]);
    ok(&[
        "evaluate",
        "--llm",
        "heuristic",
        "--manifest",
        s(&w.manifest),
        "--store",
        s(&w.store),
        "--out",
        s(&four),
        "--with-baselines",
        "--parallelism",
        "4",
    ]);
    assert_eq!(std::fs::read(&one).unwrap(), std::fs::read(&four).unwrap());

    assert!(md.starts_with("## Overall Performance\n"));
    assert!(md.contains("| System | Accuracy | Precision | Recall | F1 Score |"));
    assert!(md.contains("| VulDeePecker (cited) | 81.19 | 38.44 | 12.75 | 19.15 |"));
    assert!(md.contains("| RAG + CoT |"));
    assert!(w.root.join("eval1.md").is_file());
    let timing: Value =
        serde_json::from_str(&std::fs::read_to_string(w.root.join("eval1.timing.json")).unwrap())
            .unwrap();
    assert!(timing["elapsed_ms"].is_u64());

    let r: Value = serde_json::from_str(&std::fs::read_to_string(&one).unwrap()).unwrap();
    assert_eq!(r["manifest"]["command"], "evaluate");
    assert_eq!(r["manifest"]["split_seed"], 11);
    assert_eq!(r["manifest"]["pipeline_seed"], 11);
    assert_eq!(r["manifest"]["settings"]["llm"], "heuristic");
    assert!(r["manifest"]["template_hashes"]["classify.txt"].is_string());
    assert_eq!(r["report"]["n_samples"], 40);
    assert!(r["report"]["metrics"]["accuracy"].as_f64().unwrap() >= 0.9);
}

#[test]
fn evaluate_with_journal_resumes_to_the_same_report() {
    let w = workspace(30, 30, 20, 10);
    let journal = w.root.join("journal.jsonl");
    let a = w.root.join("a.json");
    let b = w.root.join("b.json");
    let base = [
        "evaluate",
        "--llm",
        "heuristic",
        "--manifest",
        s(&w.manifest),
        "--store",
        s(&w.store),
    ];
    ok(&[&base[..], &["--journal", s(&journal), "--out", s(&a)]].concat());
    ok(&[&base[..], &["--journal", s(&journal), "--out", s(&b)]].concat());
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(
        std::fs::read_to_string(&journal).unwrap().lines().count(),
        21
    );

    // changing the configuration must not silently reuse the journal
    let out = vulnrag(
        &[
            &base[..],
            &["--no-cot", "--journal", s(&journal), "--out", s(&b)],
        ]
        .concat(),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn evaluate_empty_test_set_exits_2() {
    let w = workspace(20, 20, 10, 5);
    ok(&[
        "split",
        "--manifest",
        s(&w.manifest),
        "--n-test",
        "0",
        "--kb-size",
        "5",
    ]);
    let out = vulnrag(&[
        "evaluate",
        "--llm",
        "heuristic",
        "--manifest",
        s(&w.manifest),
        "--store",
        s(&w.store),
        "--out",
        s(&w.root.join("r.json")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("test set is empty"));
}

#[test]
fn ablate_emits_four_rows_in_order() {
    let w = workspace(60, 60, 40, 20);
    let out = w.root.join("ablate.json");
    let md = ok(&[
        "ablate",
        "--llm",
        "heuristic",
        "--manifest",
        s(&w.manifest),
        "--store",
        s(&w.store),
        "--out",
        s(&out),
    ]);
    let rows: Vec<&str> = md.lines().filter(|l| l.starts_with("| ")).collect();
    assert_eq!(
        rows[0],
        "| Variables | Accuracy | Precision | Recall | F1 Score |"
    );
    let names: Vec<&str> = rows[1..]
        .iter()
        .map(|r| r.split(" | ").next().unwrap().trim_start_matches("| "))
        .collect();
    assert_eq!(names, ["RAG + CoT", "No RAG", "No CoT", "No RAG & CoT"]);

    let r: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let cells = r["ablation"]["cells"].as_array().unwrap();
    assert!(cells
        .iter()
        .all(|c| c["report"]["meta"]["seed"] == cells[0]["report"]["meta"]["seed"]));
    let acc = |i: usize| cells[i]["report"]["metrics"]["accuracy"].as_f64().unwrap();
    assert!(acc(0) >= acc(1));
}

#[test]
fn flag_beats_config_file() {
    let w = workspace(20, 20, 10, 5);
    let snippet = w.root.join("f.c");
    std::fs::write(&snippet, "int f(void) { return 0; }").unwrap();
    let config = w.root.join("c.toml");
    std::fs::write(
        &config,
        "llm = \"scripted\"\ndefault_response = \"VERDICT: 1\"\nrag = false\n",
    )
    .unwrap();
    // file says no retrieval
    let r: Value = serde_json::from_str(&ok(&[
        "detect",
        "--config",
        s(&config),
        "--snippet",
        s(&snippet),
    ]))
    .unwrap();
    assert!(r.get("retrieval").is_none());
    // flag turns it back on
    let r: Value = serde_json::from_str(&ok(&[
        "detect",
        "--config",
        s(&config),
        "--snippet",
        s(&snippet),
        "--rag",
        "--store",
        s(&w.store),
    ]))
    .unwrap();
    assert!(r["retrieval"].is_array());

    let bad = w.root.join("bad.toml");
    std::fs::write(&bad, "api_key = \"secret\"\n").unwrap();
    let out = vulnrag(&[
        "detect",
        "--config",
        s(&bad),
        "--snippet",
        s(&snippet),
        "--no-rag",
    ]);
    assert_eq!(out.status.code(), Some(2));
}
