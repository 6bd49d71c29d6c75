use super::message::{expansion_origin, MessageOptions, MessagePlan};
use crate::attention::{
    project_qk_batch, stream_aggregate, AttentionInputs, AttentionShape, NeighborIndex,
    QKProjection, RadialScalars, ValueProjection,
};
use crate::so3::{Block, IrrepsFeature};
use crate::{Error, OpCount, Result};

/// Equivariant attention layer: invariant scores from [`QKProjection`],
/// per-head values from [`ValueProjection`], geometric messages of filter
/// degree `l` coupled to `l_out` through the factorized path, with the
/// neighbor sum done by streaming aggregation.
#[derive(Clone, Debug)]
pub struct AttentionBlock {
    pub qk: QKProjection,
    pub value: ValueProjection,
    pub radial: RadialScalars,
    pub filter_degree: usize,
    pub out_degree: usize,
    pub options: MessageOptions,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionBlockOutput {
    /// `[atom][head]`, each of degree `l_out`.
    pub messages: Vec<Vec<Block>>,
    pub isolated: Vec<usize>,
    pub ops: OpCount,
}

impl AttentionBlock {
    pub fn forward(
        &self,
        features: &[IrrepsFeature],
        positions: &[[f64; 3]],
        idx: &NeighborIndex,
    ) -> Result<AttentionBlockOutput> {
        let n = features.len();
        if positions.len() != n || idx.n() != n {
            return Err(Error::ShapeMismatch(format!(
                "{n} features, {} positions, {} index rows",
                positions.len(),
                idx.n()
            )));
        }
        let heads = self.qk.heads();
        if self.value.heads() != heads {
            return Err(Error::ShapeMismatch("query and value head counts differ".into()));
        }
        let plan = MessagePlan::new(self.value.spec_out(), self.filter_degree, self.out_degree)?;
        let origin = expansion_origin(positions, &self.options);
        let rel = |p: [f64; 3]| [p[0] - origin[0], p[1] - origin[1], p[2] - origin[2]];
        let mut ops = OpCount::default();

        let (q, k) = project_qk_batch(features, &self.qk)?;
        let mut v = Vec::with_capacity(n * heads * plan.width);
        for (h, &p) in features.iter().zip(positions) {
            for head in self.value.apply(h)? {
                v.extend(plan.source_terms(&head, rel(p), &mut ops)?);
            }
        }
        let shape = AttentionShape {
            n,
            heads,
            dk: self.qk.head_dim(),
            channels: plan.width,
        };
        let inputs = AttentionInputs::new(shape, q, k, v)?;
        let agg = stream_aggregate(&inputs, idx, &self.radial, shape.tau())?;
        ops.edge_madds += agg.stats.madds;

        let mut messages = Vec::with_capacity(n);
        for (i, &p) in positions.iter().enumerate() {
            let per_head = (0..heads)
                .map(|h| {
                    let o = (i * heads + h) * plan.width;
                    plan.target_terms(&agg.messages[o..o + plan.width], rel(p), &mut ops)
                })
                .collect::<Result<_>>()?;
            messages.push(per_head);
        }
        Ok(AttentionBlockOutput {
            messages,
            isolated: agg.isolated,
            ops,
        })
    }
}
