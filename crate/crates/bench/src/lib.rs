//! Synthetic FCC systems, neighbor search and the benchmark protocol used by
//! the `equistream` command line tool and the criterion benches.

pub mod neighbors;
pub mod protocol;
pub mod report;
pub mod system;

pub use neighbors::{brute_force_neighbors, build_neighbors};
pub use protocol::{
    run_attention_bench, run_tp_bench, BenchConfig, BenchReport, BenchRow, GateResult, Precision,
    RowStatus, TpBenchConfig, TpRow, Variant,
};
pub use report::{linear_fit, write_attention_csv, write_tp_csv, LinearFit};
pub use system::{gen_fcc_system, SyntheticSystem};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("invalid benchmark configuration: {0}")]
    Config(String),
    #[error(
        "{variant} at N={n} deviates from the oracle by {deviation:.3e} \
         (tolerance {tolerance:.1e}, seed {seed})"
    )]
    GateFailed {
        variant: String,
        n: usize,
        deviation: f64,
        tolerance: f64,
        seed: u64,
    },
    #[error(transparent)]
    Core(#[from] equistream_core::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
