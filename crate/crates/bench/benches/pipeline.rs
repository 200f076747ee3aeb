use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

use saegraph_bench::{planted_graph, prepared_pair};
use saegraph_core::community::{detect, modularity, Algorithm, QualityConfig};
use saegraph_core::sim::{finalize, FinalizeOptions, MeasureKind};

fn accumulation(c: &mut Criterion) {
    let mut group = c.benchmark_group("accumulate");
    for n in [256u32, 1024] {
        let pair = prepared_pair(n, 20_000, 0.01);
        group.throughput(Throughput::Elements(pair.frames.len() as u64));
        for edge in [64usize, 4096] {
            group.bench_with_input(BenchmarkId::new(format!("tile{edge}"), n), &pair, |b, p| {
                b.iter(|| p.accumulate(edge))
            });
        }
    }
    group.finish();
}

fn finalization(c: &mut Criterion) {
    let mut group = c.benchmark_group("finalize");
    let acc = prepared_pair(512, 20_000, 0.02).accumulate(4096);
    for measure in MeasureKind::STANDARD {
        group.bench_function(measure.name(), |b| {
            b.iter(|| finalize(&acc, measure, FinalizeOptions::default()).unwrap())
        });
    }
    group.finish();
}

fn communities(c: &mut Criterion) {
    let mut group = c.benchmark_group("communities");
    let cfg = QualityConfig::default();
    for per_layer in [16u32, 64] {
        let graph = planted_graph(per_layer);
        group.throughput(Throughput::Elements(graph.n_edges() as u64));
        for algo in [Algorithm::Louvain, Algorithm::Leiden] {
            group.bench_with_input(BenchmarkId::new(algo.name(), per_layer), &graph, |b, g| {
                b.iter(|| detect(g, algo, &cfg).unwrap())
            });
        }
        let partition = detect(&graph, Algorithm::Leiden, &cfg).unwrap();
        group.bench_with_input(BenchmarkId::new("modularity", per_layer), &graph, |b, g| {
            b.iter(|| modularity(g, &partition, 1.0, true).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, accumulation, finalization, communities);
criterion_main!(benches);
