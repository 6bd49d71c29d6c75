use equistream_core::fixture::SystemFixture;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Fractional coordinates of the conventional cubic FCC cell.
pub const FCC_BASIS: [[f64; 3]; 4] = [
    [0.0, 0.0, 0.0],
    [0.5, 0.5, 0.0],
    [0.5, 0.0, 0.5],
    [0.0, 0.5, 0.5],
];

/// Lattice constant used by the benchmark protocol, in angstrom.
pub const DEFAULT_LATTICE: f64 = 3.8;
/// Neighbor cutoff used by the benchmark protocol, in angstrom.
pub const DEFAULT_CUTOFF: f64 = 6.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSystem {
    pub positions: Vec<[f64; 3]>,
    pub lattice_constant: f64,
    pub cells_per_side: usize,
    pub seed: u64,
}

impl SyntheticSystem {
    pub fn n(&self) -> usize {
        self.positions.len()
    }

    pub fn to_fixture(&self) -> SystemFixture {
        SystemFixture {
            seed: self.seed,
            lattice_constant: self.lattice_constant,
            positions: self.positions.clone(),
        }
    }
}

/// Smallest cube of cells holding at least `n` FCC sites.
pub fn cells_for(n: usize) -> usize {
    let mut c = 1;
    while 4 * c * c * c < n {
        c += 1;
    }
    c
}

/// Samples `n` distinct sites of an open (non-periodic) FCC supercell with
/// lattice constant `a`. Sites are returned in lattice order.
pub fn gen_fcc_system(n: usize, a: f64, seed: u64) -> SyntheticSystem {
    assert!(n >= 1, "need at least one atom");
    let cells = cells_for(n);
    let total = 4 * cells * cells * cells;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = sample(&mut rng, total, n).into_vec();
    picked.sort_unstable();
    let positions = picked
        .into_iter()
        .map(|site| {
            let (cell, b) = (site / 4, site % 4);
            let (x, y, z) = (cell / (cells * cells), (cell / cells) % cells, cell % cells);
            let f = FCC_BASIS[b];
            [
                (x as f64 + f[0]) * a,
                (y as f64 + f[1]) * a,
                (z as f64 + f[2]) * a,
            ]
        })
        .collect();
    SyntheticSystem {
        positions,
        lattice_constant: a,
        cells_per_side: cells,
        seed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
        (0..3).map(|i| (a[i] - b[i]).powi(2)).sum::<f64>().sqrt()
    }

    #[test]
    fn single_atom_on_lattice() {
        let s = gen_fcc_system(1, 3.8, 9);
        assert_eq!(s.n(), 1);
        assert_eq!(s.cells_per_side, 1);
        let p = s.positions[0];
        assert!(FCC_BASIS
            .iter()
            .any(|f| (0..3).all(|i| (f[i] * 3.8 - p[i]).abs() < 1e-12)));
    }

    #[test]
    fn full_cell_is_nearest_neighbor_tetrahedron() {
        let s = gen_fcc_system(4, 3.8, 0);
        for i in 0..4 {
            for j in i + 1..4 {
                assert!((dist(s.positions[i], s.positions[j]) - 3.8 / 2f64.sqrt()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn deterministic_and_distinct() {
        let a = gen_fcc_system(450, 3.8, 42);
        assert_eq!(a, gen_fcc_system(450, 3.8, 42));
        assert_ne!(a.positions, gen_fcc_system(450, 3.8, 43).positions);
        assert_eq!(a.cells_per_side, 5);
        let mut keys: Vec<_> = a.positions.iter().map(|p| p.map(f64::to_bits)).collect();
        keys.sort_unstable();
        keys.dedup();
        assert_eq!(keys.len(), 450);
    }

    #[test]
    fn cell_count() {
        assert_eq!(cells_for(4), 1);
        assert_eq!(cells_for(5), 2);
        assert_eq!(cells_for(2048), 8);
        assert_eq!(cells_for(32768), 21);
    }
}
