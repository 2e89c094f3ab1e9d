//! Synthetic planted-pattern corpora for offline end-to-end runs.
//!
//! Every generated function has a body of randomised filler statements. A
//! vulnerable function additionally carries one unsafe idiom (unchecked
//! copy, format string, use after free, `gets`, unchecked allocation size);
//! a clean function carries the guarded counterpart of one of them.

use crate::corpus::{CodeSample, Split};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt::Write;
use std::path::Path;

struct Family {
    cwe: &'static str,
    name: &'static str,
    description: &'static str,
    unsafe_block: &'static str,
    safe_block: &'static str,
}

const FAMILIES: [Family; 5] = [
    Family {
        cwe: "CWE-120",
        name: "Buffer Copy without Checking Size of Input",
        description: "Input is copied into a fixed stack buffer without a length check.",
        unsafe_block: "char buf[16];\nstrcpy(buf, @IN);\nstrcat(buf, @IN);\nstrcpy(ctx->name, buf);\nsprintf(buf, \"%s%s\", @IN, buf);",
        safe_block: "char buf[16];\nsize_t n = strnlen(@IN, sizeof(buf) - 1);\nmemmove(buf, @IN, n);\nbuf[n] = '\\0';",
    },
    Family {
        cwe: "CWE-134",
        name: "Use of Externally-Controlled Format String",
        description: "Caller-supplied text is passed as the format argument.",
        unsafe_block: "printf(@IN);\nfprintf(stderr, @IN);\nsyslog(LOG_ERR, @IN);\nsnprintf(ctx->msg, sizeof ctx->msg, @IN);\nprintf(ctx->msg);",
        safe_block: "fputs(@IN, stdout);\nif (@IN == NULL) return -1;",
    },
    Family {
        cwe: "CWE-416",
        name: "Use After Free",
        description: "A pointer is dereferenced after the object it refers to was released.",
        unsafe_block: "free(@P);\n@P->len = 0;\n@P->data[0] = 'x';\nfree(@P->data);\nfree(@P);\nreturn @P->len;",
        safe_block: "if (@P != NULL) {\n    release_object(&@P);\n}\nassert(@P == NULL);",
    },
    Family {
        cwe: "CWE-242",
        name: "Use of Inherently Dangerous Function",
        description: "Reads a line with gets, which cannot bound the destination.",
        unsafe_block: "char line[64];\ngets(line);\ngets(ctx->line);\nscanf(\"%s\", line);\nscanf(\"%s\", ctx->line);",
        safe_block: "char line[64];\nif (read_bounded(fd, line, sizeof line) < 0) return -1;",
    },
    Family {
        cwe: "CWE-190",
        name: "Integer Overflow or Wraparound",
        description: "An allocation size is computed by multiplication without an overflow check.",
        unsafe_block: "char *p = malloc(@N * @M);\nmemcpy(p, @IN, @N * @M);\nmemcpy(p + @N, @IN, @M);\nint total = @N * @M + 1;\nchar *q = alloca(total * @M);",
        safe_block: "if (@M == 0 || @N > SIZE_MAX / @M) return -1;\nchar *p = calloc(@N, @M);",
    },
];

const IDENTS: [&str; 32] = [
    "count", "total", "index", "offset", "width", "height", "depth", "flags", "state", "mode",
    "size", "limit", "cursor", "level", "weight", "score", "base", "delta", "ratio", "start",
    "stop", "step", "hits", "misses", "bytes", "items", "slots", "ticks", "epoch", "round",
    "phase", "tries",
];

const FUNCS: [&str; 12] = [
    "parse_header",
    "handle_request",
    "load_config",
    "update_cache",
    "read_packet",
    "decode_frame",
    "process_entry",
    "render_cell",
    "scan_token",
    "merge_list",
    "emit_record",
    "resolve_path",
];

fn pick<'a>(rng: &mut ChaCha8Rng, xs: &[&'a str]) -> &'a str {
    xs.choose(rng).copied().expect("non-empty")
}

fn filler(rng: &mut ChaCha8Rng, out: &mut String) {
    let n = rng.gen_range(1..=3);
    for _ in 0..n {
        let a = pick(rng, &IDENTS);
        let b = pick(rng, &IDENTS);
        let k: u32 = rng.gen_range(1..64);
        let stmt = match rng.gen_range(0..5) {
            0 => format!("int {a}_{k} = {b} + {k};"),
            1 => format!("if ({a} > {k}) {{\n        {b} = {a} - {k};\n    }}"),
            2 => format!("for (int i = 0; i < {a}; i++) {{\n        {b} += i * {k};\n    }}"),
            3 => format!("{a} = {b} * {k} % 97;"),
            _ => format!("ctx->{a} = {b};"),
        };
        let _ = writeln!(out, "    {stmt}");
    }
}

fn instantiate(block: &str, rng: &mut ChaCha8Rng) -> String {
    let input = pick(rng, &["input", "user_data", "name", "payload", "arg"]);
    let ptr = pick(rng, &["node", "session", "entry", "conn"]);
    let n = pick(rng, &["count", "items", "rows"]);
    let m = pick(rng, &["width", "size", "stride"]);
    block
        .replace("@IN", input)
        .replace("@P", ptr)
        .replace("@N", n)
        .replace("@M", m)
}

fn function(rng: &mut ChaCha8Rng, index: usize, block: &str) -> String {
    let mut body = String::new();
    let name = pick(rng, &FUNCS);
    let _ = writeln!(
        body,
        "static int {name}_{index}(struct context *ctx, const char *input) {{"
    );
    filler(rng, &mut body);
    for _ in 0..2 {
        for line in instantiate(block, rng).lines() {
            let _ = writeln!(body, "    {line}");
        }
        filler(rng, &mut body);
    }
    body.push_str("    return 0;\n}\n");
    body
}

/// Generates `n_vulnerable` functions with a planted unsafe idiom and
/// `n_clean` functions with a guarded idiom, interleaved in a seeded order.
/// Ids are `syn-00000`, `syn-00001`, ... in output order.
pub fn planted_corpus(n_vulnerable: usize, n_clean: usize, seed: u64) -> Vec<CodeSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels: Vec<u8> = std::iter::repeat_n(1, n_vulnerable)
        .chain(std::iter::repeat_n(0, n_clean))
        .collect();
    labels.shuffle(&mut rng);
    labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| {
            let fam = &FAMILIES[rng.gen_range(0..FAMILIES.len())];
            let vulnerable = label == 1;
            let block = if vulnerable {
                fam.unsafe_block
            } else {
                fam.safe_block
            };
            CodeSample {
                id: format!("syn-{i:05}"),
                code: function(&mut rng, i, block),
                label,
                cwe_id: vulnerable.then(|| fam.cwe.to_string()),
                vuln_name: vulnerable.then(|| fam.name.to_string()),
                description: vulnerable.then(|| fam.description.to_string()),
                split: Split::Unassigned,
            }
        })
        .collect()
}

/// Writes samples as CSV with the default (Big-Vul) column names plus an
/// `id` column.
pub fn write_csv(samples: &[CodeSample], path: &Path) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "id",
        "func_before",
        "vul",
        "CWE ID",
        "Vulnerability Classification",
        "Summary",
    ])?;
    for s in samples {
        w.write_record([
            s.id.as_str(),
            s.code.as_str(),
            if s.label == 1 { "1" } else { "0" },
            s.cwe_id.as_deref().unwrap_or(""),
            s.vuln_name.as_deref().unwrap_or(""),
            s.description.as_deref().unwrap_or(""),
        ])?;
    }
    w.flush()?;
    Ok(())
}
