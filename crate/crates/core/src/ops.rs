//! Deterministic operation counters.
//!
//! Timing is hardware dependent; these counters are not. Kernels that take a
//! `&mut OpCount` add exactly the multiply-adds their inner loops execute.

use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCount {
    /// Multiply-adds spent inside Clebsch-Gordan contractions (dense or sparse).
    pub cg_madds: u64,
    /// Multiply-adds spent on rotating blocks into and out of aligned frames.
    pub rotation_madds: u64,
    /// Scalar multiply-adds applied per edge (attention weights times features).
    pub edge_madds: u64,
}

impl OpCount {
    pub fn total(&self) -> u64 {
        self.cg_madds + self.rotation_madds + self.edge_madds
    }
}

impl AddAssign for OpCount {
    fn add_assign(&mut self, rhs: Self) {
        self.cg_madds += rhs.cg_madds;
        self.rotation_madds += rhs.rotation_madds;
        self.edge_madds += rhs.edge_madds;
    }
}
