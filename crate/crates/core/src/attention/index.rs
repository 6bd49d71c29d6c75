use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Padding value in a [`NeighborIndex`] table.
pub const SENTINEL: i64 = -1;

/// Fixed-width neighbor table: row `i` lists up to `K` neighbors of atom `i`,
/// padded with [`SENTINEL`]. Valid entries may sit anywhere in a row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeighborIndex {
    n: usize,
    k: usize,
    table: Vec<i64>,
    distances: Option<Vec<f64>>,
}

impl NeighborIndex {
    pub fn new(n: usize, k: usize, table: Vec<i64>, distances: Option<Vec<f64>>) -> Result<Self> {
        if table.len() != n * k {
            return Err(Error::InvalidNeighborIndex(format!(
                "table has {} entries, expected {n}x{k}",
                table.len()
            )));
        }
        if let Some(&bad) = table
            .iter()
            .find(|&&j| j != SENTINEL && !(0..n as i64).contains(&j))
        {
            return Err(Error::InvalidNeighborIndex(format!(
                "entry {bad} outside [0, {n})"
            )));
        }
        if let Some(d) = &distances {
            if d.len() != n * k {
                return Err(Error::InvalidNeighborIndex(format!(
                    "distances have {} entries, expected {n}x{k}",
                    d.len()
                )));
            }
            for (t, r) in table.iter().zip(d) {
                if *t != SENTINEL && !(r.is_finite() && *r >= 0.0) {
                    return Err(Error::InvalidNeighborIndex(format!("bad distance {r}")));
                }
            }
        }
        Ok(Self {
            n,
            k,
            table,
            distances,
        })
    }

    /// Builds a table from per-atom `(neighbor, distance)` lists, padding to `k`.
    pub fn from_lists(k: usize, lists: &[Vec<(usize, f64)>]) -> Result<Self> {
        let n = lists.len();
        let mut table = vec![SENTINEL; n * k];
        let mut dist = vec![0.0; n * k];
        for (i, list) in lists.iter().enumerate() {
            if list.len() > k {
                return Err(Error::InvalidNeighborIndex(format!(
                    "atom {i} has {} neighbors, width is {k}",
                    list.len()
                )));
            }
            for (s, &(j, r)) in list.iter().enumerate() {
                table[i * k + s] = j as i64;
                dist[i * k + s] = r;
            }
        }
        Self::new(n, k, table, Some(dist))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn table(&self) -> &[i64] {
        &self.table
    }

    pub fn distances(&self) -> Option<&[f64]> {
        self.distances.as_deref()
    }

    pub fn row(&self, i: usize) -> &[i64] {
        &self.table[i * self.k..(i + 1) * self.k]
    }

    /// Distance stored for `(i, slot)`, if the table carries distances.
    pub fn distance(&self, i: usize, slot: usize) -> Option<f64> {
        self.distances.as_ref().map(|d| d[i * self.k + slot])
    }

    /// `(slot, neighbor)` pairs of row `i`, skipping padding.
    pub fn valid(&self, i: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.row(i)
            .iter()
            .enumerate()
            .filter(|(_, &j)| j != SENTINEL)
            .map(|(s, &j)| (s, j as usize))
    }

    pub fn valid_count(&self, i: usize) -> usize {
        self.row(i).iter().filter(|&&j| j != SENTINEL).count()
    }

    pub fn edge_count(&self) -> usize {
        self.table.iter().filter(|&&j| j != SENTINEL).count()
    }

    pub fn mean_valid(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.edge_count() as f64 / self.n as f64
        }
    }

    /// Same neighbors with `extra` sentinel columns appended to every row.
    pub fn with_padding(&self, extra: usize) -> Self {
        let k = self.k + extra;
        let mut table = vec![SENTINEL; self.n * k];
        let mut dist = self.distances.as_ref().map(|_| vec![0.0; self.n * k]);
        for i in 0..self.n {
            table[i * k..i * k + self.k].copy_from_slice(self.row(i));
            if let (Some(d), Some(src)) = (dist.as_mut(), self.distances.as_ref()) {
                d[i * k..i * k + self.k].copy_from_slice(&src[i * self.k..(i + 1) * self.k]);
            }
        }
        Self {
            n: self.n,
            k,
            table,
            distances: dist,
        }
    }

    /// Reorders the slots of row `i` by `perm` (a permutation of `0..K`).
    pub fn permute_row(&mut self, i: usize, perm: &[usize]) {
        let k = self.k;
        let row: Vec<i64> = perm.iter().map(|&s| self.table[i * k + s]).collect();
        self.table[i * k..(i + 1) * k].copy_from_slice(&row);
        if let Some(d) = self.distances.as_mut() {
            let dr: Vec<f64> = perm.iter().map(|&s| d[i * k + s]).collect();
            d[i * k..(i + 1) * k].copy_from_slice(&dr);
        }
    }
}
