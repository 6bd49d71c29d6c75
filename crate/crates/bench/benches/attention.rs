use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use equistream_bench::{build_neighbors, gen_fcc_system};
use equistream_core::attention::{
    dense_reference_aggregate, masked_dense_aggregate, stream_aggregate, AttentionInputs,
    AttentionMask, AttentionShape, RadialScalars,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn aggregate(c: &mut Criterion) {
    let mut group = c.benchmark_group("aggregate");
    group.sample_size(10);
    for n in [128usize, 512, 2048] {
        let sys = gen_fcc_system(n, 3.8, 0);
        let idx = build_neighbors(&sys.positions, 64, 6.0);
        let radial = RadialScalars::cosine_cutoff(6.0);
        let shape = AttentionShape {
            n,
            heads: 16,
            dk: 8,
            channels: 8,
        };
        let inp = AttentionInputs::<f64>::random(shape, 1.0, &mut ChaCha8Rng::seed_from_u64(1));
        let tau = shape.tau();
        group.throughput(Throughput::Elements(idx.edge_count() as u64));
        group.bench_with_input(BenchmarkId::new("streaming", n), &n, |b, _| {
            b.iter(|| stream_aggregate(&inp, &idx, &radial, tau).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("edge-materializing", n), &n, |b, _| {
            b.iter(|| dense_reference_aggregate(&inp, &idx, &radial, tau).unwrap())
        });
        let mask = AttentionMask::from_index(&idx).unwrap();
        group.bench_with_input(BenchmarkId::new("masked-dense", n), &n, |b, _| {
            b.iter(|| masked_dense_aggregate(&inp, &idx, &mask, &radial, tau).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, aggregate);
criterion_main!(benches);
