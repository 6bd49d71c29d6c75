//! Random instances shared by the verification suites.

use equistream_core::attention::{NeighborIndex, RadialScalars, SENTINEL};
use equistream_core::factorized::MessageProblem;
use equistream_core::so3::{Block, IrrepsFeature, IrrepsSpec};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn block<R: Rng>(rng: &mut R, l: usize, channels: usize) -> Block {
    let data = (0..channels * (2 * l + 1)).map(|_| rng.random_range(-1.0..1.0)).collect();
    Block::from_vec(l, channels, data).expect("shape")
}

pub fn feature<R: Rng>(rng: &mut R, spec: &IrrepsSpec) -> IrrepsFeature {
    let flat: Vec<f64> = (0..spec.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
    IrrepsFeature::from_flat(spec.clone(), &flat).expect("shape")
}

/// Uniform unit vector.
pub fn direction<R: Rng>(rng: &mut R) -> [f64; 3] {
    let v: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(rng));
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    v.map(|x| x / n)
}

/// Uniform direction scaled to a norm drawn from `lo..hi`.
pub fn vector<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> [f64; 3] {
    let s = rng.random_range(lo..hi);
    direction(rng).map(|x| x * s)
}

/// Neighbor table whose rows cycle through no neighbors, one neighbor, a
/// full row and a random fill, at shuffled slots. Neighbors may repeat
/// unless `distinct`, which also caps the fill at `n`.
pub fn neighbor_index<R: Rng>(rng: &mut R, n: usize, k: usize, distinct: bool) -> NeighborIndex {
    let mut table = vec![SENTINEL; n * k];
    let mut dist = vec![0.0; n * k];
    for i in 0..n {
        let cap = if distinct { k.min(n) } else { k };
        let fill = match i % 4 {
            0 => 0,
            1 => 1.min(cap),
            2 => cap,
            _ => rng.random_range(0..=cap),
        };
        let mut slots: Vec<usize> = (0..k).collect();
        slots.shuffle(rng);
        let mut pool: Vec<usize> = (0..n).collect();
        pool.shuffle(rng);
        for (t, &s) in slots.iter().take(fill).enumerate() {
            let j = if distinct { pool[t] } else { rng.random_range(0..n) };
            table[i * k + s] = j as i64;
            dist[i * k + s] = rng.random_range(0.5..5.5);
        }
    }
    NeighborIndex::new(n, k, table, Some(dist)).expect("valid table")
}

/// Linear bias plus a cosine cutoff gate at 6.
pub fn radial(shift: f64) -> RadialScalars {
    let cut = RadialScalars::cosine_cutoff(6.0);
    RadialScalars::new(move |r| -0.3 * r + 0.1 + shift, move |r| cut.gate(r))
}

pub fn message_spec() -> IrrepsSpec {
    IrrepsSpec::new(vec![(0, 2), (1, 2), (2, 1)]).expect("valid spec")
}

/// Atoms in a cube of half-width `side`, random neighbor subsets and
/// softmax-normalized weights.
pub fn message_problem<R: Rng>(rng: &mut R, n: usize, k: usize, side: f64) -> MessageProblem {
    let positions: Vec<[f64; 3]> = (0..n)
        .map(|_| std::array::from_fn(|_| rng.random_range(-side..side)))
        .collect();
    let spec = message_spec();
    let features = (0..n).map(|_| feature(rng, &spec)).collect();
    let mut lists = Vec::with_capacity(n);
    let mut weights = vec![0.0; n * k];
    for i in 0..n {
        let mut js: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        js.shuffle(rng);
        let fill = rng.random_range(0..=k.min(js.len()));
        let raw: Vec<f64> = (0..fill).map(|_| rng.random_range(-2.0f64..2.0).exp()).collect();
        let z: f64 = raw.iter().sum();
        for (s, w) in raw.iter().enumerate() {
            weights[i * k + s] = w / z;
        }
        lists.push(js[..fill].iter().map(|&j| (j, 1.0)).collect());
    }
    let idx = NeighborIndex::from_lists(k, &lists).expect("rows fit");
    MessageProblem::new(positions, features, idx, weights).expect("consistent problem")
}

/// All pairs within `cutoff`, with distances.
pub fn radius_graph(positions: &[[f64; 3]], cutoff: f64) -> NeighborIndex {
    let n = positions.len();
    let lists: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let d: f64 = (0..3).map(|c| (positions[j][c] - positions[i][c]).powi(2)).sum();
                    (j, d.sqrt())
                })
                .filter(|&(_, d)| d <= cutoff)
                .collect()
        })
        .collect();
    NeighborIndex::from_lists(n.max(1), &lists).expect("rows fit")
}
