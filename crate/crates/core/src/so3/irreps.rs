use serde::{Deserialize, Serialize};

use super::{check_degree, dim, Rotation, WignerD};
use crate::{Error, Result};

/// Largest degree supported by the coupling tables and Wigner matrices.
pub const L_MAX: usize = 4;

/// Ordered `(degree, channels)` entries of a direct sum of irreps.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IrrepsSpec {
    entries: Vec<(usize, usize)>,
}

impl IrrepsSpec {
    pub fn new(entries: Vec<(usize, usize)>) -> Result<Self> {
        Self::with_lmax(entries, L_MAX)
    }

    /// Like [`IrrepsSpec::new`] but with a tighter degree bound.
    pub fn with_lmax(entries: Vec<(usize, usize)>, lmax: usize) -> Result<Self> {
        if lmax > L_MAX {
            return Err(Error::UnsupportedDegree {
                degree: lmax,
                max: L_MAX,
            });
        }
        if entries.is_empty() {
            return Err(Error::InvalidSpec("no entries".into()));
        }
        for (n, &(l, c)) in entries.iter().enumerate() {
            if l > lmax {
                return Err(Error::UnsupportedDegree {
                    degree: l,
                    max: lmax,
                });
            }
            if c == 0 {
                return Err(Error::InvalidSpec(format!("degree {l} has zero channels")));
            }
            if n > 0 && entries[n - 1].0 >= l {
                return Err(Error::InvalidSpec(
                    "degrees must be strictly increasing".into(),
                ));
            }
        }
        Ok(Self { entries })
    }

    /// `channels` copies of every degree `0..=lmax`.
    pub fn uniform(lmax: usize, channels: usize) -> Result<Self> {
        Self::new((0..=lmax).map(|l| (l, channels)).collect())
    }

    pub fn entries(&self) -> &[(usize, usize)] {
        &self.entries
    }

    pub fn degrees(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|e| e.0)
    }

    pub fn channels_of(&self, l: usize) -> Option<usize> {
        self.entries.iter().find(|e| e.0 == l).map(|e| e.1)
    }

    pub fn lmax(&self) -> usize {
        self.entries.last().map(|e| e.0).unwrap_or(0)
    }

    /// Total scalar dimension `sum C_l (2l+1)`.
    pub fn dim(&self) -> usize {
        self.entries.iter().map(|&(l, c)| c * dim(l)).sum()
    }
}

/// A `channels x (2l+1)` real matrix holding one degree-`l` irrep per row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Block {
    degree: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Block {
    pub fn zeros(degree: usize, channels: usize) -> Self {
        Self {
            degree,
            channels,
            data: vec![0.0; channels * dim(degree)],
        }
    }

    pub fn from_vec(degree: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * dim(degree) {
            return Err(Error::ShapeMismatch(format!(
                "block of degree {degree} with {channels} channels needs {} values, got {}",
                channels * dim(degree),
                data.len()
            )));
        }
        Ok(Self {
            degree,
            channels,
            data,
        })
    }

    /// Single-channel block; the degree is inferred from the length.
    pub fn from_vector(values: &[f64]) -> Result<Self> {
        if values.len() % 2 == 0 {
            return Err(Error::ShapeMismatch(format!(
                "irrep vectors have odd length, got {}",
                values.len()
            )));
        }
        Self::from_vec(values.len() / 2, 1, values.to_vec())
    }

    #[inline]
    pub fn degree(&self) -> usize {
        self.degree
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn dim(&self) -> usize {
        dim(self.degree)
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, c: usize) -> &[f64] {
        let d = self.dim();
        &self.data[c * d..(c + 1) * d]
    }

    #[inline]
    pub fn row_mut(&mut self, c: usize) -> &mut [f64] {
        let d = self.dim();
        &mut self.data[c * d..(c + 1) * d]
    }

    /// Value at channel `c`, order `m`.
    #[inline]
    pub fn get(&self, c: usize, m: i32) -> f64 {
        self.data[c * self.dim() + (self.degree as i32 + m) as usize]
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    /// `self += s * other`.
    pub fn add_scaled(&mut self, other: &Block, s: f64) {
        debug_assert_eq!(self.degree, other.degree);
        debug_assert_eq!(self.channels, other.channels);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn max_abs_diff(&self, other: &Block) -> f64 {
        assert_eq!(self.data.len(), other.data.len(), "block shapes differ");
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Applies `D` to every row.
    pub fn transformed(&self, d: &WignerD) -> Block {
        assert_eq!(d.degree(), self.degree, "Wigner degree differs from block degree");
        let mut out = Block::zeros(self.degree, self.channels);
        for c in 0..self.channels {
            d.apply_into(self.row(c), out.row_mut(c));
        }
        out
    }

    /// Applies `D^T` to every row.
    pub fn transformed_transpose(&self, d: &WignerD) -> Block {
        assert_eq!(d.degree(), self.degree, "Wigner degree differs from block degree");
        let mut out = Block::zeros(self.degree, self.channels);
        for c in 0..self.channels {
            d.apply_transpose_into(self.row(c), out.row_mut(c));
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// A node feature: one [`Block`] per spec entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IrrepsFeature {
    spec: IrrepsSpec,
    blocks: Vec<Block>,
}

impl IrrepsFeature {
    pub fn new(spec: IrrepsSpec, blocks: Vec<Block>) -> Result<Self> {
        if blocks.len() != spec.entries().len() {
            return Err(Error::ShapeMismatch(format!(
                "spec has {} entries, got {} blocks",
                spec.entries().len(),
                blocks.len()
            )));
        }
        for (b, &(l, c)) in blocks.iter().zip(spec.entries()) {
            if b.degree() != l || b.channels() != c {
                return Err(Error::ShapeMismatch(format!(
                    "expected block ({l}, {c}), got ({}, {})",
                    b.degree(),
                    b.channels()
                )));
            }
            if !b.is_finite() {
                return Err(Error::ShapeMismatch(format!(
                    "block of degree {l} has non-finite entries"
                )));
            }
        }
        Ok(Self { spec, blocks })
    }

    pub fn zeros(spec: IrrepsSpec) -> Self {
        let blocks = spec
            .entries()
            .iter()
            .map(|&(l, c)| Block::zeros(l, c))
            .collect();
        Self { spec, blocks }
    }

    /// Builds a feature from a flat vector laid out entry by entry.
    pub fn from_flat(spec: IrrepsSpec, flat: &[f64]) -> Result<Self> {
        if flat.len() != spec.dim() {
            return Err(Error::ShapeMismatch(format!(
                "spec dimension {} but {} values",
                spec.dim(),
                flat.len()
            )));
        }
        let mut off = 0;
        let mut blocks = Vec::with_capacity(spec.entries().len());
        for &(l, c) in spec.entries() {
            let n = c * dim(l);
            blocks.push(Block::from_vec(l, c, flat[off..off + n].to_vec())?);
            off += n;
        }
        Self::new(spec, blocks)
    }

    pub fn spec(&self) -> &IrrepsSpec {
        &self.spec
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block(&self, l: usize) -> Option<&Block> {
        self.blocks.iter().find(|b| b.degree() == l)
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.blocks
            .iter()
            .flat_map(|b| b.data().iter().copied())
            .collect()
    }

    pub fn max_abs_diff(&self, other: &IrrepsFeature) -> f64 {
        assert_eq!(self.spec, other.spec, "features have different specs");
        self.blocks
            .iter()
            .zip(&other.blocks)
            .fold(0.0, |m, (a, b)| m.max(a.max_abs_diff(b)))
    }
}

/// Rotates every block of `h` by `R`.
pub fn rotate_feature(h: &IrrepsFeature, rotation: &Rotation) -> Result<IrrepsFeature> {
    let mut blocks = Vec::with_capacity(h.blocks.len());
    for b in &h.blocks {
        check_degree(b.degree())?;
        let d = super::wigner_d(b.degree(), rotation)?;
        blocks.push(b.transformed(&d));
    }
    Ok(IrrepsFeature {
        spec: h.spec.clone(),
        blocks,
    })
}
