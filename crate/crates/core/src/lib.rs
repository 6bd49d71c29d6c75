//! Numerical core for equivariant attention with linear activation memory.
//!
//! The crate is organised in four layers:
//!
//! * [`so3`]: real-basis spherical harmonics, Clebsch-Gordan tables, Wigner
//!   matrices and the dense tensor product used as the oracle everywhere else.
//! * [`eaas`]: axis-aligned sparsification. A tensor product against a solid
//!   harmonic is computed by rotating into the frame where the harmonic is
//!   pole-sparse, applying a one-term-per-order re-indexing, and rotating back.
//! * [`attention`]: invariant query/key projection and the online-softmax
//!   neighbor aggregation, together with a materializing reference and the
//!   recomputing backward pass.
//! * [`factorized`]: node-centric message passing built from the above, checked
//!   against the explicit per-edge message sum.
//!
//! Basis conventions are listed by [`conventions::manifest`]. All math that
//! feeds an oracle comparison runs in `f64`.

pub mod attention;
pub mod conventions;
pub mod eaas;
mod error;
pub mod factorized;
pub mod fixture;
pub mod ops;
pub mod so3;

pub use error::{Error, Result};
pub use ops::OpCount;

pub use attention::{
    attention_weights, dense_reference_aggregate, masked_dense_aggregate, project_qk, score,
    stream_aggregate, stream_aggregate_backward, stream_aggregate_parallel, AggregateOutput,
    AggregateStats, AllocTracker, AttentionInputs, AttentionMask, AttentionShape, Gradients,
    NeighborIndex, QKProjection, RadialScalars, Scalar, ValueProjection, SENTINEL,
};
pub use eaas::{
    alignment_rotation, apply_reindex, build_reindex_rule, eaas_tensor_product, AlignedFrame,
    AlignmentRotation, ReindexRule,
};
pub use factorized::{
    edge_centric_message, factorized_message, source_term, target_couple,
    translation_coefficients, AttentionBlock, MessageOptions, MessageProblem,
    TranslationCoefficients,
};
pub use so3::{
    cg_real, complex_cg, real_spherical_harmonics, rotate_feature, solid_harmonics,
    tensor_product_dense, wigner_6j, wigner_d, Block, CgTable, IrrepsFeature, IrrepsSpec,
    Rotation, WignerD, L_MAX,
};
