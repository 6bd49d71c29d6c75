use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::index::NeighborIndex;
use super::memory::AllocTracker;
use super::radial::RadialScalars;
use crate::{Error, Result};

/// Input element type. Accumulation is always done in `f64`.
pub trait Scalar: Copy + Send + Sync + PartialEq + std::fmt::Debug + 'static {
    const NAME: &'static str;
    fn to_f64(self) -> f64;
    fn from_f64(x: f64) -> Self;
}

impl Scalar for f64 {
    const NAME: &'static str = "f64";
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
    #[inline]
    fn from_f64(x: f64) -> Self {
        x
    }
}

impl Scalar for f32 {
    const NAME: &'static str = "f32";
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
    #[inline]
    fn from_f64(x: f64) -> Self {
        x as f32
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttentionShape {
    pub n: usize,
    pub heads: usize,
    /// Query/key width per head.
    pub dk: usize,
    /// Value width per head.
    pub channels: usize,
}

impl AttentionShape {
    /// Default score temperature `1 / sqrt(dk)`.
    pub fn tau(&self) -> f64 {
        1.0 / (self.dk as f64).sqrt()
    }
}

/// Queries and keys are `N x H x dk`, values `N x H x C`, all row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionInputs<T> {
    shape: AttentionShape,
    q: Vec<T>,
    k: Vec<T>,
    v: Vec<T>,
}

impl<T: Scalar> AttentionInputs<T> {
    pub fn new(shape: AttentionShape, q: Vec<T>, k: Vec<T>, v: Vec<T>) -> Result<Self> {
        let AttentionShape {
            n,
            heads,
            dk,
            channels,
        } = shape;
        if q.len() != n * heads * dk || k.len() != n * heads * dk {
            return Err(Error::ShapeMismatch(format!(
                "q/k lengths {}/{} for {n}x{heads}x{dk}",
                q.len(),
                k.len()
            )));
        }
        if v.len() != n * heads * channels {
            return Err(Error::ShapeMismatch(format!(
                "v length {} for {n}x{heads}x{channels}",
                v.len()
            )));
        }
        Ok(Self { shape, q, k, v })
    }

    /// Uniform entries in `[-scale, scale]`.
    pub fn random<R: Rng + ?Sized>(shape: AttentionShape, scale: f64, rng: &mut R) -> Self {
        let mut draw = |len: usize| -> Vec<T> {
            (0..len)
                .map(|_| T::from_f64(rng.random_range(-scale..=scale)))
                .collect()
        };
        let qk = shape.n * shape.heads * shape.dk;
        let q = draw(qk);
        let k = draw(qk);
        let v = draw(shape.n * shape.heads * shape.channels);
        Self { shape, q, k, v }
    }

    pub fn shape(&self) -> AttentionShape {
        self.shape
    }

    pub fn q(&self) -> &[T] {
        &self.q
    }

    pub fn k(&self) -> &[T] {
        &self.k
    }

    pub fn v(&self) -> &[T] {
        &self.v
    }

    pub fn q_mut(&mut self) -> &mut [T] {
        &mut self.q
    }

    pub fn k_mut(&mut self) -> &mut [T] {
        &mut self.k
    }

    pub fn v_mut(&mut self) -> &mut [T] {
        &mut self.v
    }

    #[inline]
    pub fn q_row(&self, i: usize, h: usize) -> &[T] {
        let d = self.shape.dk;
        let o = (i * self.shape.heads + h) * d;
        &self.q[o..o + d]
    }

    #[inline]
    pub fn k_row(&self, j: usize, h: usize) -> &[T] {
        let d = self.shape.dk;
        let o = (j * self.shape.heads + h) * d;
        &self.k[o..o + d]
    }

    #[inline]
    pub fn v_row(&self, j: usize, h: usize) -> &[T] {
        let c = self.shape.channels;
        let o = (j * self.shape.heads + h) * c;
        &self.v[o..o + c]
    }

    pub fn cast<U: Scalar>(&self) -> AttentionInputs<U> {
        let f = |x: &Vec<T>| x.iter().map(|a| U::from_f64(a.to_f64())).collect();
        AttentionInputs {
            shape: self.shape,
            q: f(&self.q),
            k: f(&self.k),
            v: f(&self.v),
        }
    }

    fn check_index(&self, idx: &NeighborIndex) -> Result<()> {
        if idx.n() != self.shape.n {
            return Err(Error::ShapeMismatch(format!(
                "neighbor index has {} rows, inputs have {} atoms",
                idx.n(),
                self.shape.n
            )));
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.to_f64() * y.to_f64()).sum()
}

/// `tau * (q_i . k_j) + b(r_ij)`.
pub fn score(q_i: &[f64], k_j: &[f64], r_ij: f64, radial: &RadialScalars, tau: f64) -> f64 {
    tau * dot(q_i, k_j) + radial.bias(r_ij)
}

/// Counters gathered during one aggregation call.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregateStats {
    /// Peak working elements excluding inputs and the output.
    pub peak_elems: usize,
    pub madds: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AggregateOutput<T> {
    /// `N x H x C`.
    pub messages: Vec<T>,
    /// Atoms with no valid neighbor; their messages are zero.
    pub isolated: Vec<usize>,
    pub stats: AggregateStats,
}

fn isolated_atoms(idx: &NeighborIndex) -> Vec<usize> {
    (0..idx.n()).filter(|&i| idx.valid_count(i) == 0).collect()
}

/// Running softmax state of one `(atom, head)` pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AttentionState {
    pub max: f64,
    pub norm: f64,
}

impl Default for AttentionState {
    fn default() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            norm: 0.0,
        }
    }
}

impl AttentionState {
    /// Folds in one score; returns `(rescale, weight)` for the accumulator:
    /// `acc <- acc * rescale + weight * value`.
    #[inline]
    pub fn push(&mut self, s: f64) -> (f64, f64) {
        let max = self.max.max(s);
        let rescale = (self.max - max).exp();
        let w = (s - max).exp();
        self.norm = self.norm * rescale + w;
        self.max = max;
        (rescale, w)
    }
}

#[inline]
#[allow(clippy::too_many_arguments)]
fn stream_atom<T: Scalar>(
    inp: &AttentionInputs<T>,
    idx: &NeighborIndex,
    radial: &RadialScalars,
    tau: f64,
    i: usize,
    max: &mut [f64],
    norm: &mut [f64],
    acc: &mut [f64],
) {
    let c = inp.shape.channels;
    for h in 0..inp.shape.heads {
        let qi = inp.q_row(i, h);
        let a = &mut acc[h * c..(h + 1) * c];
        let mut st = AttentionState::default();
        for (slot, j) in idx.valid(i) {
            let (b, phi) = radial.edge(idx.distance(i, slot));
            let s = tau * dot(qi, inp.k_row(j, h)) + b;
            let (rescale, w) = st.push(s);
            let wphi = w * phi;
            for (x, v) in a.iter_mut().zip(inp.v_row(j, h)) {
                *x = *x * rescale + wphi * v.to_f64();
            }
        }
        max[h] = st.max;
        norm[h] = st.norm;
    }
}

fn finish<T: Scalar>(acc: &[f64], norm: &[f64], c: usize) -> Vec<T> {
    acc.chunks(c)
        .zip(norm)
        .flat_map(|(a, &z)| {
            a.iter()
                .map(move |&x| T::from_f64(if z > 0.0 { x / z } else { 0.0 }))
        })
        .collect()
}

fn edge_madds(idx: &NeighborIndex, shape: AttentionShape) -> u64 {
    (idx.edge_count() * shape.heads * (shape.dk + shape.channels)) as u64
}

/// Single-pass online-softmax aggregation. Working memory is the per-atom
/// running maximum, normalizer and accumulator, independent of `K`.
pub fn stream_aggregate<T: Scalar>(
    inp: &AttentionInputs<T>,
    idx: &NeighborIndex,
    radial: &RadialScalars,
    tau: f64,
) -> Result<AggregateOutput<T>> {
    stream_aggregate_impl(inp, idx, radial, tau, false)
}

/// [`stream_aggregate`] parallelized over target atoms.
pub fn stream_aggregate_parallel<T: Scalar>(
    inp: &AttentionInputs<T>,
    idx: &NeighborIndex,
    radial: &RadialScalars,
    tau: f64,
) -> Result<AggregateOutput<T>> {
    stream_aggregate_impl(inp, idx, radial, tau, true)
}

fn stream_aggregate_impl<T: Scalar>(
    inp: &AttentionInputs<T>,
    idx: &NeighborIndex,
    radial: &RadialScalars,
    tau: f64,
    parallel: bool,
) -> Result<AggregateOutput<T>> {
    inp.check_index(idx)?;
    let AttentionShape {
        n,
        heads,
        channels: c,
        ..
    } = inp.shape;
    let tracker = AllocTracker::new();
    let mut max = tracker.alloc(n * heads, f64::NEG_INFINITY);
    let mut norm = tracker.alloc(n * heads, 0.0);
    let mut acc = tracker.alloc(n * heads * c, 0.0);
    if parallel && n > 0 && heads * c > 0 {
        max.par_chunks_mut(heads)
            .zip(norm.par_chunks_mut(heads))
            .zip(acc.par_chunks_mut(heads * c))
            .enumerate()
            .for_each(|(i, ((m, z), a))| stream_atom(inp, idx, radial, tau, i, m, z, a));
    } else if heads > 0 {
        for i in 0..n {
            stream_atom(
                inp,
                idx,
                radial,
                tau,
                i,
                &mut max[i * heads..(i + 1) * heads],
                &mut norm[i * heads..(i + 1) * heads],
                &mut acc[i * heads * c..(i + 1) * heads * c],
            );
        }
    }
    let messages = finish(&acc, &norm, c);
    Ok(AggregateOutput {
        messages,
        isolated: isolated_atoms(idx),
        stats: AggregateStats {
            peak_elems: tracker.peak(),
            madds: edge_madds(idx, inp.shape),
        },
    })
}

/// Normalized attention weights `alpha`, laid out `N x K x H`; padding is 0.
pub fn attention_weights<T: Scalar>(
    inp: &AttentionInputs<T>,
    idx: &NeighborIndex,
    radial: &RadialScalars,
    tau: f64,
) -> Result<Vec<f64>> {
    inp.check_index(idx)?;
    let (k, heads) = (idx.k(), inp.shape.heads);
    let mut alpha = vec![0.0; inp.shape.n * k * heads];
    for i in 0..inp.shape.n {
        for h in 0..heads {
            let mut mx = f64::NEG_INFINITY;
            for (slot, j) in idx.valid(i) {
                let (b, _) = radial.edge(idx.distance(i, slot));
                let s = tau * dot(inp.q_row(i, h), inp.k_row(j, h)) + b;
                alpha[(i * k + slot) * heads + h] = s;
                mx = mx.max(s);
            }
            let mut z = 0.0;
            for (slot, _) in idx.valid(i) {
                let e = &mut alpha[(i * k + slot) * heads + h];
                *e = (*e - mx).exp();
                z += *e;
            }
            for (slot, _) in idx.valid(i) {
                alpha[(i * k + slot) * heads + h] /= z;
            }
        }
    }
    Ok(alpha)
}

/// Materializing reference: gathers keys and values per edge, builds the
/// full score matrix, then runs a two-pass stable softmax.
pub fn dense_reference_aggregate<T: Scalar>(
    inp: &AttentionInputs<T>,
    idx: &NeighborIndex,
    radial: &RadialScalars,
    tau: f64,
) -> Result<AggregateOutput<T>> {
    inp.check_index(idx)?;
    let AttentionShape {
        n,
        heads,
        dk,
        channels: c,
    } = inp.shape;
    let k = idx.k();
    let tracker = AllocTracker::new();
    let edge = |i: usize, s: usize, h: usize| (i * k + s) * heads + h;

    let mut gk = tracker.alloc(n * k * heads * dk, 0.0);
    let mut gv = tracker.alloc(n * k * heads * c, 0.0);
    let mut phi = tracker.alloc(n * k, 0.0);
    for i in 0..n {
        for (s, j) in idx.valid(i) {
            phi[i * k + s] = radial.edge(idx.distance(i, s)).1;
            for h in 0..heads {
                let e = edge(i, s, h);
                for (dst, src) in gk[e * dk..(e + 1) * dk].iter_mut().zip(inp.k_row(j, h)) {
                    *dst = src.to_f64();
                }
                for (dst, src) in gv[e * c..(e + 1) * c].iter_mut().zip(inp.v_row(j, h)) {
                    *dst = src.to_f64();
                }
            }
        }
    }

    let mut scores = tracker.alloc(n * k * heads, f64::NEG_INFINITY);
    for i in 0..n {
        for (s, _) in idx.valid(i) {
            let b = radial.edge(idx.distance(i, s)).0;
            for h in 0..heads {
                let e = edge(i, s, h);
                let qi = inp.q_row(i, h);
                let d: f64 = qi
                    .iter()
                    .zip(&gk[e * dk..(e + 1) * dk])
                    .map(|(x, y)| x.to_f64() * y)
                    .sum();
                scores[e] = tau * d + b;
            }
        }
    }

    let mut row_max = tracker.alloc(n * heads, f64::NEG_INFINITY);
    let mut row_sum = tracker.alloc(n * heads, 0.0);
    let mut alpha = tracker.alloc(n * k * heads, 0.0);
    for i in 0..n {
        for h in 0..heads {
            let r = i * heads + h;
            for (s, _) in idx.valid(i) {
                row_max[r] = row_max[r].max(scores[edge(i, s, h)]);
            }
            for (s, _) in idx.valid(i) {
                let e = edge(i, s, h);
                alpha[e] = (scores[e] - row_max[r]).exp();
                row_sum[r] += alpha[e];
            }
            for (s, _) in idx.valid(i) {
                alpha[edge(i, s, h)] /= row_sum[r];
            }
        }
    }

    let mut out = vec![0.0; n * heads * c];
    for i in 0..n {
        for h in 0..heads {
            let o = &mut out[(i * heads + h) * c..(i * heads + h + 1) * c];
            for (s, _) in idx.valid(i) {
                let e = edge(i, s, h);
                let w = alpha[e] * phi[i * k + s];
                for (x, v) in o.iter_mut().zip(&gv[e * c..(e + 1) * c]) {
                    *x += w * v;
                }
            }
        }
    }
    Ok(AggregateOutput {
        messages: out.into_iter().map(T::from_f64).collect(),
        isolated: isolated_atoms(idx),
        stats: AggregateStats {
            peak_elems: tracker.peak(),
            madds: edge_madds(idx, inp.shape),
        },
    })
}

/// Dense `N x N` neighbor mask. Entry `(i, j)` holds `slot + 1` when `j`
/// sits in slot `slot` of row `i`, else 0.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AttentionMask {
    n: usize,
    slots: Vec<u16>,
}

impl AttentionMask {
    pub fn from_index(idx: &NeighborIndex) -> Result<Self> {
        if idx.k() >= u16::MAX as usize {
            return Err(Error::InvalidNeighborIndex(format!(
                "mask supports K < {}",
                u16::MAX
            )));
        }
        let n = idx.n();
        let mut slots = vec![0u16; n * n];
        for i in 0..n {
            for (s, j) in idx.valid(i) {
                let e = &mut slots[i * n + j];
                if *e != 0 {
                    return Err(Error::InvalidNeighborIndex(format!(
                        "atom {i} lists neighbor {j} twice"
                    )));
                }
                *e = s as u16 + 1;
            }
        }
        Ok(Self { n, slots })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Elements held by the mask.
    pub fn elems(&self) -> usize {
        self.slots.len()
    }

    #[inline]
    pub fn slot(&self, i: usize, j: usize) -> Option<usize> {
        match self.slots[i * self.n + j] {
            0 => None,
            s => Some(s as usize - 1),
        }
    }
}

/// Masked dense attention: every `(i, j)` score is computed, masked entries
/// are discarded, and softmax runs online per row. Compute is `O(N^2)`; the
/// prebuilt mask is counted in the peak.
pub fn masked_dense_aggregate<T: Scalar>(
    inp: &AttentionInputs<T>,
    idx: &NeighborIndex,
    mask: &AttentionMask,
    radial: &RadialScalars,
    tau: f64,
) -> Result<AggregateOutput<T>> {
    inp.check_index(idx)?;
    if mask.n != idx.n() {
        return Err(Error::ShapeMismatch("mask size differs from index".into()));
    }
    let AttentionShape {
        n,
        heads,
        dk,
        channels: c,
    } = inp.shape;
    let tracker = AllocTracker::new();
    tracker.charge(mask.elems());
    let mut norm = tracker.alloc(n * heads, 0.0);
    let mut acc = tracker.alloc(n * heads * c, 0.0);
    // one N x H score row per atom, all heads from contiguous key rows
    let mut scores = tracker.alloc(n * heads, 0.0);
    tracker.charge(2 * heads);
    let mut states = vec![AttentionState::default(); heads];
    for i in 0..n {
        let qi = &inp.q[i * heads * dk..(i + 1) * heads * dk];
        for (j, row) in scores.chunks_exact_mut(heads).enumerate() {
            let kj = &inp.k[j * heads * dk..(j + 1) * heads * dk];
            for ((s, q), k) in row.iter_mut().zip(qi.chunks_exact(dk)).zip(kj.chunks_exact(dk)) {
                *s = dot(q, k);
            }
        }
        states.fill(AttentionState::default());
        let a = &mut acc[i * heads * c..(i + 1) * heads * c];
        for j in 0..n {
            let Some(slot) = mask.slot(i, j) else {
                continue;
            };
            let (b, phi) = radial.edge(idx.distance(i, slot));
            for h in 0..heads {
                let (rescale, w) = states[h].push(tau * scores[j * heads + h] + b);
                let wphi = w * phi;
                for (x, v) in a[h * c..(h + 1) * c].iter_mut().zip(inp.v_row(j, h)) {
                    *x = *x * rescale + wphi * v.to_f64();
                }
            }
        }
        for (h, st) in states.iter().enumerate() {
            norm[i * heads + h] = st.norm;
        }
    }
    let messages = finish(&acc, &norm, c);
    Ok(AggregateOutput {
        messages,
        isolated: isolated_atoms(idx),
        stats: AggregateStats {
            peak_elems: tracker.peak(),
            madds: (n * n * heads * dk + idx.edge_count() * heads * c) as u64,
        },
    })
}
