//! Node-centric equivariant attention.
//!
//! Invariant scores come from per-degree channel projections of the node
//! features ([`project_qk`]). Aggregation over a padded [`NeighborIndex`]
//! is available in three forms with identical results:
//!
//! - [`stream_aggregate`]: one pass per atom with an online softmax,
//!   working memory linear in `N`;
//! - [`dense_reference_aggregate`]: gathers every edge and materializes the
//!   score matrix, working memory linear in `N * K`;
//! - [`masked_dense_aggregate`]: scores every atom pair against an `N x N`
//!   mask.

mod aggregate;
mod backward;
mod index;
mod memory;
mod projection;
mod radial;

pub use aggregate::{
    attention_weights, dense_reference_aggregate, masked_dense_aggregate, score,
    stream_aggregate, stream_aggregate_parallel, AggregateOutput, AggregateStats,
    AttentionInputs, AttentionMask, AttentionShape, AttentionState, Scalar,
};
pub use backward::{stream_aggregate_backward, Gradients};
pub use index::{NeighborIndex, SENTINEL};
pub use memory::{AllocTracker, Tracked};
pub use projection::{project_qk, project_qk_batch, QKProjection, QKWeights, ValueProjection};
pub use radial::RadialScalars;
