use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use equistream_core::so3::{solid_harmonics, tensor_product_dense, Block};
use equistream_core::{eaas_tensor_product, AlignedFrame, OpCount};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CHANNELS: usize = 128;

fn products(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut group = c.benchmark_group("tensor_product");
    for (li, lf, lo) in [(1, 1, 1), (2, 1, 2), (2, 2, 2), (2, 2, 0)] {
        let data: Vec<f64> = (0..CHANNELS * (2 * li + 1))
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let h = Block::from_vec(li, CHANNELS, data).unwrap();
        let r = [0.7, -1.3, 0.4];
        let y = Block::from_vector(&solid_harmonics(lf, r).unwrap()).unwrap();
        let id = format!("{li}x{lf}->{lo}");
        group.bench_function(BenchmarkId::new("dense", &id), |b| {
            b.iter(|| tensor_product_dense(&h, &y, lo).unwrap())
        });
        group.bench_function(BenchmarkId::new("eaas", &id), |b| {
            b.iter(|| eaas_tensor_product(&h, r, lf, lo).unwrap())
        });
        let frame = AlignedFrame::new(r, li.max(lo)).unwrap();
        group.bench_function(BenchmarkId::new("eaas-prealigned", &id), |b| {
            b.iter(|| frame.product(&h, lf, lo, &mut OpCount::default()).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, products);
criterion_main!(benches);
