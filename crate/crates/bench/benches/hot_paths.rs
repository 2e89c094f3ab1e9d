use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use vulnrag_bench::{hashed, samples, store};
use vulnrag_core::metrics::compute_metrics;
use vulnrag_core::ConfusionCounts;

fn embedding(c: &mut Criterion) {
    let embedder = hashed(256);
    let code: Vec<String> = samples(64, 1).into_iter().map(|s| s.code).collect();
    let bytes: usize = code.iter().map(String::len).sum();
    let mut g = c.benchmark_group("hashed_embed");
    g.throughput(Throughput::Bytes(bytes as u64));
    g.bench_function("64_functions", |b| {
        b.iter(|| {
            for s in &code {
                black_box(embedder.embed(black_box(s)).unwrap());
            }
        })
    });
    g.finish();
}

fn retrieval(c: &mut Criterion) {
    let embedder = hashed(256);
    let query = embedder.embed(&samples(2, 99)[0].code).unwrap();
    let mut g = c.benchmark_group("top_k");
    for n in [500, 5_000] {
        let kb = store(n, embedder.as_ref());
        g.throughput(Throughput::Elements(n as u64));
        g.bench_with_input(BenchmarkId::new("k5", n), &kb, |b, kb| {
            b.iter(|| black_box(kb.top_k(black_box(&query), 5).unwrap()))
        });
    }
    g.finish();
}

fn metrics(c: &mut Criterion) {
    let pairs: Vec<(u8, u8)> = (0..10_000u32)
        .map(|i| ((i % 3 == 0) as u8, (i % 5 == 0) as u8))
        .collect();
    c.bench_function("confusion_and_metrics_10k", |b| {
        b.iter(|| {
            let mut counts = ConfusionCounts::default();
            for &(t, p) in black_box(&pairs) {
                counts.record(t, p);
            }
            black_box(compute_metrics(counts).unwrap())
        })
    });
}

criterion_group!(benches, embedding, retrieval, metrics);
criterion_main!(benches);
