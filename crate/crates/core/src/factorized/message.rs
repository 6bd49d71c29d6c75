use serde::{Deserialize, Serialize};

use super::translation::{recoupling, translation_coefficients};
use crate::attention::NeighborIndex;
use crate::eaas::AlignedFrame;
use crate::so3::{
    dim, solid_harmonics, tensor_product_dense_counted, triangle, Block, IrrepsFeature,
    IrrepsSpec, Rotation, L_MAX,
};
use crate::{Error, OpCount, Result};

/// Positions, node features and per-edge weights over a neighbor table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MessageProblem {
    positions: Vec<[f64; 3]>,
    features: Vec<IrrepsFeature>,
    index: NeighborIndex,
    /// `N x K`, entries under padding are ignored.
    weights: Vec<f64>,
}

impl MessageProblem {
    pub fn new(
        positions: Vec<[f64; 3]>,
        features: Vec<IrrepsFeature>,
        index: NeighborIndex,
        weights: Vec<f64>,
    ) -> Result<Self> {
        let n = positions.len();
        if features.len() != n || index.n() != n || weights.len() != n * index.k() {
            return Err(Error::ShapeMismatch(format!(
                "{n} positions, {} features, {} index rows, {} weights",
                features.len(),
                index.n(),
                weights.len()
            )));
        }
        if let Some(f) = features.first() {
            if features.iter().any(|g| g.spec() != f.spec()) {
                return Err(Error::ShapeMismatch("features must share one spec".into()));
            }
        }
        if positions.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::InvalidSpec("non-finite position".into()));
        }
        Ok(Self {
            positions,
            features,
            index,
            weights,
        })
    }

    /// Rejects problems whose weight rows do not sum to one (softmax output).
    pub fn check_softmax(&self, tol: f64) -> Result<()> {
        let k = self.index.k();
        for i in 0..self.n() {
            if self.index.valid_count(i) == 0 {
                continue;
            }
            let s: f64 = self.index.valid(i).map(|(slot, _)| self.weights[i * k + slot]).sum();
            if (s - 1.0).abs() > tol {
                return Err(Error::InvalidSpec(format!("weights of atom {i} sum to {s}")));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.positions.len()
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    pub fn features(&self) -> &[IrrepsFeature] {
        &self.features
    }

    pub fn index(&self) -> &NeighborIndex {
        &self.index
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn spec(&self) -> Option<&IrrepsSpec> {
        self.features.first().map(IrrepsFeature::spec)
    }

    /// Every position shifted by `t`.
    pub fn translated(&self, t: [f64; 3]) -> Self {
        let mut out = self.clone();
        for p in &mut out.positions {
            for (x, d) in p.iter_mut().zip(t) {
                *x += d;
            }
        }
        out
    }

    /// Positions and features rotated together.
    pub fn rotated(&self, rot: &Rotation) -> Result<Self> {
        let mut out = self.clone();
        for p in &mut out.positions {
            *p = rot.apply(*p);
        }
        out.features = self
            .features
            .iter()
            .map(|f| crate::so3::rotate_feature(f, rot))
            .collect::<Result<_>>()?;
        Ok(out)
    }
}

/// One `(h_j (x) R^s(p_j))^(k)` block in the flat per-atom source layout.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceKey {
    /// Position of the input degree within the feature spec.
    pub entry: usize,
    pub input_degree: usize,
    pub channels: usize,
    pub source_degree: usize,
    pub coupled_degree: usize,
    pub offset: usize,
}

/// `out += coefficient * (A[key] (x) R^t(p_i))^(l_out)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetTerm {
    pub key: usize,
    pub target_degree: usize,
    pub coefficient: f64,
    /// First output channel this term writes.
    pub out_channel: usize,
}

/// Resolved source and target couplings for one `(spec, l, l_out)`.
///
/// The output of a message is a single block of degree `l_out` whose
/// channels concatenate, in spec order, every input degree that can reach
/// `l_out` through the filter degree `l`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MessagePlan {
    pub filter_degree: usize,
    pub out_degree: usize,
    pub keys: Vec<SourceKey>,
    pub targets: Vec<TargetTerm>,
    /// Flat length of one atom's source terms.
    pub width: usize,
    pub out_channels: usize,
    /// `(entry, out_channel)` of each input degree reaching the output.
    pub routes: Vec<(usize, usize)>,
}

impl MessagePlan {
    pub fn new(spec: &IrrepsSpec, l: usize, out: usize) -> Result<Self> {
        if l > L_MAX || out > L_MAX {
            return Err(Error::UnsupportedDegree {
                degree: l.max(out),
                max: L_MAX,
            });
        }
        let translation = translation_coefficients(l)?;
        let mut plan = MessagePlan {
            filter_degree: l,
            out_degree: out,
            keys: Vec::new(),
            targets: Vec::new(),
            width: 0,
            out_channels: 0,
            routes: Vec::new(),
        };
        for (entry, &(lh, c)) in spec.entries().iter().enumerate() {
            if !triangle(lh, l, out) {
                continue;
            }
            let out_channel = plan.out_channels;
            plan.routes.push((entry, out_channel));
            plan.out_channels += c;
            for u in 0..=l {
                let (t, s) = (u, l - u);
                // R^u(-p) = (-1)^u R^u(p)
                let w = translation.weight(u) * if u % 2 == 1 { -1.0 } else { 1.0 };
                for (k, x) in recoupling(lh, t, s, l, out)?.terms {
                    if x == 0.0 {
                        continue;
                    }
                    let key = plan.key(entry, lh, c, s, k);
                    plan.targets.push(TargetTerm {
                        key,
                        target_degree: t,
                        coefficient: w * x,
                        out_channel,
                    });
                }
            }
        }
        Ok(plan)
    }

    fn key(&mut self, entry: usize, lh: usize, c: usize, s: usize, k: usize) -> usize {
        if let Some(i) = self
            .keys
            .iter()
            .position(|q| q.entry == entry && q.source_degree == s && q.coupled_degree == k)
        {
            return i;
        }
        self.keys.push(SourceKey {
            entry,
            input_degree: lh,
            channels: c,
            source_degree: s,
            coupled_degree: k,
            offset: self.width,
        });
        self.width += c * dim(k);
        self.keys.len() - 1
    }

    fn frame_degree(&self) -> usize {
        self.keys
            .iter()
            .map(|k| k.input_degree.max(k.coupled_degree))
            .chain([self.out_degree])
            .max()
            .unwrap_or(0)
    }

    /// Flat source terms of one node at position `p` (relative to the
    /// expansion origin).
    pub fn source_terms(&self, h: &IrrepsFeature, p: [f64; 3], ops: &mut OpCount) -> Result<Vec<f64>> {
        let frame = AlignedFrame::new(p, self.frame_degree())?;
        if frame.is_degenerate() {
            log::debug!("source at origin {p:?}, dense fallback");
        }
        let mut flat = vec![0.0; self.width];
        for key in &self.keys {
            let b = frame.product(
                &h.blocks()[key.entry],
                key.source_degree,
                key.coupled_degree,
                ops,
            )?;
            flat[key.offset..key.offset + b.data().len()].copy_from_slice(b.data());
        }
        Ok(flat)
    }

    /// Couples aggregated source terms with the target position.
    pub fn target_terms(&self, aggregated: &[f64], p: [f64; 3], ops: &mut OpCount) -> Result<Block> {
        if aggregated.len() != self.width {
            return Err(Error::ShapeMismatch(format!(
                "aggregate has {} entries, plan width is {}",
                aggregated.len(),
                self.width
            )));
        }
        let frame = AlignedFrame::new(p, self.frame_degree())?;
        let mut out = Block::zeros(self.out_degree, self.out_channels);
        let dout = dim(self.out_degree);
        for term in &self.targets {
            let key = &self.keys[term.key];
            let len = key.channels * dim(key.coupled_degree);
            let a = Block::from_vec(
                key.coupled_degree,
                key.channels,
                aggregated[key.offset..key.offset + len].to_vec(),
            )?;
            let b = frame.product(&a, term.target_degree, self.out_degree, ops)?;
            let dst = &mut out.data_mut()[term.out_channel * dout..(term.out_channel + key.channels) * dout];
            for (x, y) in dst.iter_mut().zip(b.data()) {
                *x += term.coefficient * y;
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageOptions {
    /// Expand around the centroid of all positions instead of the origin.
    pub recentre: bool,
}

impl Default for MessageOptions {
    fn default() -> Self {
        Self { recentre: true }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MessageOutput {
    /// One block of degree `l_out` per atom.
    pub blocks: Vec<Block>,
    pub ops: OpCount,
}

fn require_spec(prob: &MessageProblem) -> Result<&IrrepsSpec> {
    prob.spec()
        .ok_or_else(|| Error::InvalidSpec("message problem has no atoms".into()))
}

/// Oracle: `m_i = sum_j w_ij (h_j (x) R^l(r_j - r_i))^(l_out)` with dense
/// products on every edge.
pub fn edge_centric_message(prob: &MessageProblem, l: usize, out: usize) -> Result<MessageOutput> {
    let plan = MessagePlan::new(require_spec(prob)?, l, out)?;
    let mut ops = OpCount::default();
    let idx = prob.index();
    let k = idx.k();
    let mut blocks = Vec::with_capacity(prob.n());
    for i in 0..prob.n() {
        let mut acc = Block::zeros(out, plan.out_channels);
        let ri = prob.positions[i];
        for (slot, j) in idx.valid(i) {
            let rj = prob.positions[j];
            let y = Block::from_vector(&solid_harmonics(
                l,
                [rj[0] - ri[0], rj[1] - ri[1], rj[2] - ri[2]],
            )?)?;
            let w = prob.weights[i * k + slot];
            for &(entry, oc) in &plan.routes {
                let b = tensor_product_dense_counted(&prob.features[j].blocks()[entry], &y, out, &mut ops)?;
                let d = b.data();
                for (x, v) in acc.data_mut()[oc * dim(out)..oc * dim(out) + d.len()].iter_mut().zip(d) {
                    *x += w * v;
                }
            }
        }
        blocks.push(acc);
    }
    Ok(MessageOutput { blocks, ops })
}

/// Expansion origin for a set of positions.
pub fn expansion_origin(positions: &[[f64; 3]], opts: &MessageOptions) -> [f64; 3] {
    if !opts.recentre || positions.is_empty() {
        return [0.0; 3];
    }
    let n = positions.len() as f64;
    let mut c = [0.0; 3];
    for p in positions {
        for (a, b) in c.iter_mut().zip(p) {
            *a += b;
        }
    }
    c.map(|x| x / n)
}

fn relative(p: [f64; 3], origin: [f64; 3]) -> [f64; 3] {
    [p[0] - origin[0], p[1] - origin[1], p[2] - origin[2]]
}

/// Node-centric evaluation of [`edge_centric_message`]: couple each node
/// with its own position, sum weighted couplings over neighbors, then
/// couple with the target position. Edges only carry scalar weights.
pub fn factorized_message(
    prob: &MessageProblem,
    l: usize,
    out: usize,
    opts: &MessageOptions,
) -> Result<MessageOutput> {
    let plan = MessagePlan::new(require_spec(prob)?, l, out)?;
    let origin = expansion_origin(&prob.positions, opts);
    let mut ops = OpCount::default();
    let sources: Vec<Vec<f64>> = prob
        .features
        .iter()
        .zip(&prob.positions)
        .map(|(h, &p)| plan.source_terms(h, relative(p, origin), &mut ops))
        .collect::<Result<_>>()?;
    let idx = prob.index();
    let k = idx.k();
    let mut blocks = Vec::with_capacity(prob.n());
    let mut agg = vec![0.0; plan.width];
    for i in 0..prob.n() {
        agg.iter_mut().for_each(|x| *x = 0.0);
        for (slot, j) in idx.valid(i) {
            let w = prob.weights[i * k + slot];
            for (a, s) in agg.iter_mut().zip(&sources[j]) {
                *a += w * s;
            }
            ops.edge_madds += plan.width as u64;
        }
        blocks.push(plan.target_terms(&agg, relative(prob.positions[i], origin), &mut ops)?);
    }
    Ok(MessageOutput { blocks, ops })
}

/// `(h (x) R^(l_s)(r))^(l_c)` through the aligned frame (dense at the origin).
pub fn source_term(h: &Block, r: [f64; 3], ls: usize, lc: usize) -> Result<Block> {
    AlignedFrame::new(r, h.degree().max(lc))?.product(h, ls, lc, &mut OpCount::default())
}

/// `(m (x) R^(l_t)(r))^(l_out)` through the aligned frame (dense at the origin).
pub fn target_couple(m: &Block, r: [f64; 3], lt: usize, out: usize) -> Result<Block> {
    AlignedFrame::new(r, m.degree().max(out))?.product(m, lt, out, &mut OpCount::default())
}
