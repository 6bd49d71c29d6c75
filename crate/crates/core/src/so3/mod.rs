//! Real-basis SO(3) algebra.
//!
//! Conventions (also emitted by [`crate::conventions::manifest`]):
//!
//! * orders run `m = -l..=l` ascending, so index `l + m` of a length `2l+1`
//!   vector holds order `m`;
//! * real harmonics are orthonormal on the sphere and are obtained from the
//!   Condon-Shortley complex harmonics by the fixed change of basis in
//!   [`cg::real_basis`]; for `l = 1` this gives `(y, z, -x)` up to
//!   `sqrt(3 / 4 pi)`;
//! * a Wigner matrix `D(R)` is defined by `Y(R r) = D(R) Y(r)`, and a block of
//!   shape `channels x (2l+1)` transforms row-wise, i.e. `H -> H D(R)^T`;
//! * coupling tables are unitary: for each output order the squared
//!   coefficients over `(m1, m2)` sum to one.

pub mod cg;
pub mod harmonics;
pub mod irreps;
pub mod product;
pub mod rotation;

pub use cg::{cg_real, complex_cg, wigner_6j, CgTable};
pub use harmonics::{real_spherical_harmonics, solid_harmonics};
pub use irreps::{rotate_feature, Block, IrrepsFeature, IrrepsSpec, L_MAX};
pub use product::{tensor_product_dense, tensor_product_dense_counted};
pub use rotation::{wigner_d, Rotation, WignerD};

/// `|l1 - l2| <= l3 <= l1 + l2`.
#[inline]
pub fn triangle(l1: usize, l2: usize, l3: usize) -> bool {
    l3 <= l1 + l2 && l1 <= l2 + l3 && l2 <= l1 + l3
}

#[inline]
pub fn dim(l: usize) -> usize {
    2 * l + 1
}

pub(crate) fn check_degree(l: usize) -> crate::Result<()> {
    if l > L_MAX {
        Err(crate::Error::UnsupportedDegree {
            degree: l,
            max: L_MAX,
        })
    } else {
        Ok(())
    }
}
