use std::cmp::Ordering;
use std::collections::HashMap;

use equistream_core::attention::NeighborIndex;

fn dist2(a: [f64; 3], b: [f64; 3]) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
}

fn by_distance(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

fn finish(k: usize, mut lists: Vec<Vec<(f64, usize)>>) -> NeighborIndex {
    let rows: Vec<Vec<(usize, f64)>> = lists
        .iter_mut()
        .map(|l| {
            l.sort_by(by_distance);
            l.truncate(k);
            l.iter().map(|&(d2, j)| (j, d2.sqrt())).collect()
        })
        .collect();
    NeighborIndex::from_lists(k, &rows).expect("rows are within width")
}

/// Up to `k` nearest neighbors within `r_cut` per atom, sorted by distance
/// with ties broken by index, found with a uniform cell list.
pub fn build_neighbors(positions: &[[f64; 3]], k: usize, r_cut: f64) -> NeighborIndex {
    assert!(k >= 1, "neighbor width must be positive");
    let n = positions.len();
    let rc2 = r_cut * r_cut;
    let cell_of = |p: [f64; 3]| p.map(|x| (x / r_cut).floor() as i64);
    let mut cells: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    for (i, &p) in positions.iter().enumerate() {
        cells.entry(cell_of(p)).or_default().push(i);
    }
    let mut lists = vec![Vec::new(); n];
    for (i, &p) in positions.iter().enumerate() {
        let c = cell_of(p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let Some(members) = cells.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) else {
                        continue;
                    };
                    for &j in members {
                        if j == i {
                            continue;
                        }
                        let d2 = dist2(p, positions[j]);
                        if d2 <= rc2 {
                            lists[i].push((d2, j));
                        }
                    }
                }
            }
        }
    }
    finish(k, lists)
}

/// All-pairs version of [`build_neighbors`].
pub fn brute_force_neighbors(positions: &[[f64; 3]], k: usize, r_cut: f64) -> NeighborIndex {
    let rc2 = r_cut * r_cut;
    let lists = positions
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            positions
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(j, &q)| (dist2(p, q), j))
                .filter(|&(d2, _)| d2 <= rc2)
                .collect()
        })
        .collect();
    finish(k, lists)
}
