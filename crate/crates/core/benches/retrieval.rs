use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use specprobe_core::ingest::{ApproxTokenizer, Tokenizer};
use specprobe_core::par::Execution;
use specprobe_core::rag::{embed, index_with, Chunk, HashingEmbedder};

const WORDS: &[&str] = &[
    "pet",
    "order",
    "user",
    "inventory",
    "vehicle",
    "model",
    "market",
    "quote",
    "status",
    "identifier",
    "configuration",
    "price",
    "currency",
    "category",
    "photo",
    "shipment",
    "invoice",
    "account",
];

fn chunks(n: usize) -> Vec<Chunk> {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    (0..n)
        .map(|i| {
            let text: Vec<&str> = (0..600).map(|_| WORDS[rng.gen_range(0..WORDS.len())]).collect();
            let text = text.join(" ");
            Chunk { id: format!("c{i:05}"), token_count: ApproxTokenizer.count(&text), text, anchor: String::new() }
        })
        .collect()
}

fn bench_index(c: &mut Criterion) {
    let mut g = c.benchmark_group("index");
    g.sample_size(10);
    for n in [200, 1000] {
        let input = chunks(n);
        for (name, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
            g.bench_with_input(BenchmarkId::new(name, n), &input, |b, input| {
                b.iter(|| index_with(black_box(input.clone()), &HashingEmbedder, exec).unwrap())
            });
        }
    }
    g.finish();
}

fn bench_query(c: &mut Criterion) {
    let mut g = c.benchmark_group("query");
    let q = embed("find available pets by status and price", &HashingEmbedder).unwrap();
    for n in [1000, 20000] {
        let mut input = chunks(1000);
        // replicate with fresh ids to reach larger stores cheaply
        let base = input.clone();
        while input.len() < n {
            let k = input.len();
            input.extend(
                base.iter().take(n - k).enumerate().map(|(i, c)| Chunk { id: format!("d{:06}", k + i), ..c.clone() }),
            );
        }
        let store = index_with(input, &HashingEmbedder, Execution::Parallel).unwrap();
        for (name, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
            g.bench_with_input(BenchmarkId::new(name, n), &store, |b, store| {
                b.iter(|| store.query_with(black_box(&q), 10, exec).unwrap())
            });
        }
    }
    g.finish();
}

criterion_group!(benches, bench_index, bench_query);
criterion_main!(benches);
