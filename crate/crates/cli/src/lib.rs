//! Verification suites and argument plumbing for the `equistream` binary.

pub mod gen;
pub mod verify;
