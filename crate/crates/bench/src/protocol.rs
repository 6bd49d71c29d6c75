use std::fmt;
use std::hint::black_box;
use std::str::FromStr;
use std::time::Instant;

use equistream_core::attention::{
    dense_reference_aggregate, masked_dense_aggregate, stream_aggregate,
    stream_aggregate_parallel, AggregateOutput, AttentionInputs, AttentionMask, AttentionShape,
    NeighborIndex, RadialScalars, Scalar,
};
use equistream_core::so3::{solid_harmonics, tensor_product_dense_counted, triangle, Block};
use equistream_core::{AlignedFrame, OpCount};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::neighbors::build_neighbors;
use crate::system::{gen_fcc_system, DEFAULT_CUTOFF, DEFAULT_LATTICE};
use crate::BenchError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    EdgeMaterializing,
    MaskedDense,
    Streaming,
    StreamingParallel,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::EdgeMaterializing,
        Variant::MaskedDense,
        Variant::Streaming,
        Variant::StreamingParallel,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::EdgeMaterializing => "edge-materializing",
            Variant::MaskedDense => "masked-dense",
            Variant::Streaming => "streaming",
            Variant::StreamingParallel => "streaming-parallel",
        }
    }

    /// Working elements the variant allocates, excluding inputs and output.
    pub fn predicted_peak(self, n: usize, k: usize, shape: AttentionShape) -> usize {
        let (h, dk, c) = (shape.heads, shape.dk, shape.channels);
        match self {
            Variant::EdgeMaterializing => n * k * (h * (dk + c + 2) + 1) + 2 * n * h,
            Variant::MaskedDense => n * n + n * h * (c + 2) + 2 * h,
            Variant::Streaming | Variant::StreamingParallel => n * h * (c + 2),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = BenchError;
    fn from_str(s: &str) -> Result<Self, BenchError> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| BenchError::Config(format!("unknown variant {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    pub fn name(self) -> &'static str {
        match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        }
    }

    /// Agreement required by the correctness gate: absolute in double,
    /// relative to the largest reference entry in single.
    pub fn gate_tolerance(self) -> f64 {
        match self {
            Precision::F32 => 1e-5,
            Precision::F64 => 1e-10,
        }
    }
}

impl FromStr for Precision {
    type Err = BenchError;
    fn from_str(s: &str) -> Result<Self, BenchError> {
        match s {
            "f32" => Ok(Precision::F32),
            "f64" => Ok(Precision::F64),
            _ => Err(BenchError::Config(format!("unknown precision {s:?}"))),
        }
    }
}

/// One attention benchmark at a single system size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub n: usize,
    pub k: usize,
    pub heads: usize,
    /// Value width per head.
    pub channels: usize,
    /// Query/key width per head.
    pub dk: usize,
    pub lmax: usize,
    pub precision: Precision,
    pub warmup: usize,
    pub iters: usize,
    pub seed: u64,
    pub variants: Vec<Variant>,
    pub lattice_constant: f64,
    pub r_cut: f64,
    /// Largest total element count (inputs, output, working set) a variant
    /// may need before it is reported as out of memory instead of run.
    pub memory_budget: usize,
    pub masked_dense_max_n: usize,
}

/// Latency protocol: 10 warmup and 50 timed iterations.
pub const LATENCY_WARMUP: usize = 10;
pub const LATENCY_ITERS: usize = 50;
/// Throughput protocol: 10 warmup and 10 timed iterations.
pub const THROUGHPUT_WARMUP: usize = 10;
pub const THROUGHPUT_ITERS: usize = 10;

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            n: 512,
            k: 64,
            heads: 16,
            channels: 8,
            dk: 8,
            lmax: 2,
            precision: Precision::F64,
            warmup: LATENCY_WARMUP,
            iters: LATENCY_ITERS,
            seed: 0,
            variants: vec![
                Variant::EdgeMaterializing,
                Variant::MaskedDense,
                Variant::Streaming,
            ],
            lattice_constant: DEFAULT_LATTICE,
            r_cut: DEFAULT_CUTOFF,
            memory_budget: 256 << 20,
            masked_dense_max_n: 8192,
        }
    }
}

impl BenchConfig {
    pub fn shape(&self) -> AttentionShape {
        AttentionShape {
            n: self.n,
            heads: self.heads,
            dk: self.dk,
            channels: self.channels,
        }
    }

    fn validate(&self) -> Result<(), BenchError> {
        if self.n == 0 || self.k == 0 || self.heads == 0 || self.channels == 0 || self.dk == 0 {
            return Err(BenchError::Config("sizes must be positive".into()));
        }
        if self.iters == 0 {
            return Err(BenchError::Config("need at least one timed iteration".into()));
        }
        if self.variants.is_empty() {
            return Err(BenchError::Config("no variants selected".into()));
        }
        Ok(())
    }

    fn fixed_elems(&self) -> usize {
        let s = self.shape();
        s.n * s.heads * (2 * s.dk + 2 * s.channels)
    }

    /// Why `v` is skipped under this config, if it is.
    pub fn oom_reason(&self, v: Variant) -> Option<String> {
        if v == Variant::MaskedDense && self.n > self.masked_dense_max_n {
            return Some(format!("N > {} mask cap", self.masked_dense_max_n));
        }
        let need = v.predicted_peak(self.n, self.k, self.shape()) + self.fixed_elems();
        (need > self.memory_budget)
            .then(|| format!("needs {need} elements, budget {}", self.memory_budget))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowStatus {
    Ok,
    Oom,
}

/// Timing and counters of one variant at one size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub variant: Variant,
    pub n: usize,
    pub k: usize,
    pub heads: usize,
    pub channels: usize,
    pub lmax: usize,
    pub precision: Precision,
    pub status: RowStatus,
    pub iteration_times: Vec<f64>,
    pub mean_time_s: Option<f64>,
    /// Timed iterations per second.
    pub qps: Option<f64>,
    /// Measured for run variants, predicted for out-of-memory ones.
    pub peak_elems: usize,
    pub madds: u64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateResult {
    /// `"dense"` for the full materializing reference, `"rows"` for a
    /// two-pass per-row reference on sampled atoms.
    pub reference: String,
    pub checked_rows: usize,
    /// `(variant, max deviation)` for every variant that ran.
    pub deviations: Vec<(Variant, f64)>,
    pub tolerance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub gate: GateResult,
    pub mean_neighbors: f64,
}

/// Two-pass softmax aggregation of one atom, used as the gate oracle when
/// the materializing reference exceeds the memory budget.
fn row_reference(
    inp: &AttentionInputs<f64>,
    idx: &NeighborIndex,
    radial: &RadialScalars,
    tau: f64,
    i: usize,
) -> Vec<f64> {
    let s = inp.shape();
    let mut out = vec![0.0; s.heads * s.channels];
    for h in 0..s.heads {
        let scores: Vec<(usize, f64, f64)> = idx
            .valid(i)
            .map(|(slot, j)| {
                let (b, phi) = radial.edge(idx.distance(i, slot));
                let d: f64 = inp.q_row(i, h).iter().zip(inp.k_row(j, h)).map(|(x, y)| x * y).sum();
                (j, tau * d + b, phi)
            })
            .collect();
        let mx = scores.iter().fold(f64::NEG_INFINITY, |m, e| m.max(e.1));
        let z: f64 = scores.iter().map(|e| (e.1 - mx).exp()).sum();
        for &(j, sc, phi) in &scores {
            let w = (sc - mx).exp() / z * phi;
            for (o, v) in out[h * s.channels..(h + 1) * s.channels].iter_mut().zip(inp.v_row(j, h)) {
                *o += w * v;
            }
        }
    }
    out
}

fn execute<T: Scalar>(
    v: Variant,
    inp: &AttentionInputs<T>,
    idx: &NeighborIndex,
    mask: Option<&AttentionMask>,
    radial: &RadialScalars,
    tau: f64,
) -> Result<AggregateOutput<T>, BenchError> {
    Ok(match v {
        Variant::EdgeMaterializing => dense_reference_aggregate(inp, idx, radial, tau)?,
        Variant::MaskedDense => {
            masked_dense_aggregate(inp, idx, mask.expect("mask built"), radial, tau)?
        }
        Variant::Streaming => stream_aggregate(inp, idx, radial, tau)?,
        Variant::StreamingParallel => stream_aggregate_parallel(inp, idx, radial, tau)?,
    })
}

struct Reference {
    label: &'static str,
    rows: Vec<usize>,
    /// `rows.len() x H x C`.
    values: Vec<f64>,
    scale: f64,
}

fn reference(
    cfg: &BenchConfig,
    inp: &AttentionInputs<f64>,
    idx: &NeighborIndex,
    radial: &RadialScalars,
    tau: f64,
) -> Result<Reference, BenchError> {
    let (rows, values, label) = if cfg.oom_reason(Variant::EdgeMaterializing).is_none() {
        let out = dense_reference_aggregate(inp, idx, radial, tau)?;
        ((0..cfg.n).collect(), out.messages, "dense")
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x6a7e);
        let mut rows = sample(&mut rng, cfg.n, cfg.n.min(256)).into_vec();
        rows.sort_unstable();
        let values = rows
            .iter()
            .flat_map(|&i| row_reference(inp, idx, radial, tau, i))
            .collect();
        (rows, values, "rows")
    };
    let scale = values.iter().fold(0.0f64, |m: f64, x: &f64| m.max(x.abs()));
    Ok(Reference {
        label,
        rows,
        values,
        scale,
    })
}

fn deviation<T: Scalar>(r: &Reference, out: &[T], width: usize, precision: Precision) -> f64 {
    let mut worst = 0.0f64;
    for (ri, &i) in r.rows.iter().enumerate() {
        let got = &out[i * width..(i + 1) * width];
        let want = &r.values[ri * width..(ri + 1) * width];
        for (g, w) in got.iter().zip(want) {
            let d = (g.to_f64() - w).abs();
            worst = worst.max(if d.is_nan() { f64::INFINITY } else { d });
        }
    }
    match precision {
        Precision::F64 => worst,
        Precision::F32 => worst / r.scale.max(f64::MIN_POSITIVE),
    }
}

/// Runs the attention benchmark for one size: builds the FCC system and its
/// neighbor table, draws random inputs, checks every variant against the
/// oracle on its first warmup call, then times the rest.
pub fn run_attention_bench(cfg: &BenchConfig) -> Result<BenchReport, BenchError> {
    cfg.validate()?;
    let sys = gen_fcc_system(cfg.n, cfg.lattice_constant, cfg.seed);
    let idx = build_neighbors(&sys.positions, cfg.k, cfg.r_cut);
    let radial = RadialScalars::cosine_cutoff(cfg.r_cut);
    let shape = cfg.shape();
    let tau = shape.tau();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_mul(0x9e37_79b9).wrapping_add(cfg.n as u64));
    let inputs = AttentionInputs::<f64>::random(shape, 1.0, &mut rng);
    match cfg.precision {
        Precision::F64 => run_typed(cfg, &inputs, &inputs, &idx, &radial, tau),
        Precision::F32 => run_typed(cfg, &inputs, &inputs.cast::<f32>(), &idx, &radial, tau),
    }
}

fn run_typed<T: Scalar>(
    cfg: &BenchConfig,
    exact: &AttentionInputs<f64>,
    inp: &AttentionInputs<T>,
    idx: &NeighborIndex,
    radial: &RadialScalars,
    tau: f64,
) -> Result<BenchReport, BenchError> {
    let shape = cfg.shape();
    let width = shape.heads * shape.channels;
    let reference = reference(cfg, exact, idx, radial, tau)?;
    let tol = cfg.precision.gate_tolerance();
    let mut gate = GateResult {
        reference: reference.label.into(),
        checked_rows: reference.rows.len(),
        deviations: Vec::new(),
        tolerance: tol,
    };
    let mut rows = Vec::new();
    for &v in &cfg.variants {
        let mut row = BenchRow {
            variant: v,
            n: cfg.n,
            k: cfg.k,
            heads: cfg.heads,
            channels: cfg.channels,
            lmax: cfg.lmax,
            precision: cfg.precision,
            status: RowStatus::Ok,
            iteration_times: Vec::new(),
            mean_time_s: None,
            qps: None,
            peak_elems: v.predicted_peak(cfg.n, cfg.k, shape),
            madds: 0,
            seed: cfg.seed,
        };
        if let Some(reason) = cfg.oom_reason(v) {
            log::warn!("{v} at N={}: out of memory by policy ({reason})", cfg.n);
            row.status = RowStatus::Oom;
            rows.push(row);
            continue;
        }
        // the mask is built once per size, outside timing
        let mask = match v {
            Variant::MaskedDense => Some(AttentionMask::from_index(idx)?),
            _ => None,
        };
        let first = execute(v, inp, idx, mask.as_ref(), radial, tau)?;
        let dev = deviation(&reference, &first.messages, width, cfg.precision);
        gate.deviations.push((v, dev));
        if !(dev <= tol) {
            return Err(BenchError::GateFailed {
                variant: v.name().into(),
                n: cfg.n,
                deviation: dev,
                tolerance: tol,
                seed: cfg.seed,
            });
        }
        row.peak_elems = first.stats.peak_elems;
        row.madds = first.stats.madds;
        drop(first);
        for _ in 1..cfg.warmup {
            black_box(execute(v, inp, idx, mask.as_ref(), radial, tau)?);
        }
        for _ in 0..cfg.iters {
            let t = Instant::now();
            let out = black_box(execute(v, inp, idx, mask.as_ref(), radial, tau)?);
            row.iteration_times.push(t.elapsed().as_secs_f64());
            drop(out);
        }
        let total: f64 = row.iteration_times.iter().sum();
        row.mean_time_s = Some(total / cfg.iters as f64);
        row.qps = Some(cfg.iters as f64 / total);
        log::info!(
            "{v} N={} mean {:.3e}s peak {} madds {}",
            cfg.n,
            total / cfg.iters as f64,
            row.peak_elems,
            row.madds
        );
        rows.push(row);
    }
    Ok(BenchReport {
        rows,
        gate,
        mean_neighbors: idx.mean_valid(),
    })
}

/// Dense vs aligned-sparse tensor products.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TpBenchConfig {
    pub lmax: usize,
    pub channels: usize,
    /// Numbers of products per timed call.
    pub counts: Vec<usize>,
    pub warmup: usize,
    pub iters: usize,
    pub seed: u64,
}

impl Default for TpBenchConfig {
    fn default() -> Self {
        Self {
            lmax: 2,
            channels: 128,
            counts: vec![1, 16, 256],
            warmup: THROUGHPUT_WARMUP,
            iters: THROUGHPUT_ITERS,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TpRow {
    pub path: (usize, usize, usize),
    pub count: usize,
    pub channels: usize,
    pub lmax: usize,
    pub dense_time_s: f64,
    pub eaas_time_s: f64,
    /// Coupling multiply-adds of the dense product.
    pub dense_madds: u64,
    /// Coupling multiply-adds of the sparse re-indexing.
    pub eaas_madds: u64,
    /// Frame rotation multiply-adds of the sparse path.
    pub eaas_rotation_madds: u64,
    pub seed: u64,
}

impl TpRow {
    pub fn madd_ratio(&self) -> f64 {
        self.dense_madds as f64 / self.eaas_madds.max(1) as f64
    }

    pub fn time_ratio(&self) -> f64 {
        self.dense_time_s / self.eaas_time_s
    }
}

fn time_mean(warmup: usize, iters: usize, mut f: impl FnMut()) -> f64 {
    for _ in 0..warmup {
        f();
    }
    let t = Instant::now();
    for _ in 0..iters {
        f();
    }
    t.elapsed().as_secs_f64() / iters as f64
}

/// Times every triangle-valid path with degrees up to `lmax` at each count,
/// after checking the sparse product against the dense one.
pub fn run_tp_bench(cfg: &TpBenchConfig) -> Result<Vec<TpRow>, BenchError> {
    if cfg.iters == 0 || cfg.channels == 0 || cfg.counts.is_empty() {
        return Err(BenchError::Config("need iterations, channels and counts".into()));
    }
    if cfg.lmax > equistream_core::L_MAX {
        return Err(BenchError::Config(format!("lmax {} unsupported", cfg.lmax)));
    }
    let mut rows = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for li in 0..=cfg.lmax {
        for lf in 0..=cfg.lmax {
            for lo in 0..=cfg.lmax {
                if !triangle(li, lf, lo) {
                    continue;
                }
                for &count in &cfg.counts {
                    let hs: Vec<Block> = (0..count)
                        .map(|_| {
                            let d: Vec<f64> = (0..cfg.channels * (2 * li + 1))
                                .map(|_| rng.random_range(-1.0..1.0))
                                .collect();
                            Block::from_vec(li, cfg.channels, d).expect("shape")
                        })
                        .collect();
                    let rs: Vec<[f64; 3]> = (0..count)
                        .map(|_| std::array::from_fn(|_| rng.random_range(-2.0..2.0)))
                        .collect();
                    let dense = |ops: &mut OpCount| -> Vec<Block> {
                        hs.iter()
                            .zip(&rs)
                            .map(|(h, &r)| {
                                let y = Block::from_vector(&solid_harmonics(lf, r).expect("degree"))
                                    .expect("shape");
                                tensor_product_dense_counted(h, &y, lo, ops).expect("path")
                            })
                            .collect()
                    };
                    let sparse = |ops: &mut OpCount| -> Vec<Block> {
                        hs.iter()
                            .zip(&rs)
                            .map(|(h, &r)| {
                                AlignedFrame::new(r, li.max(lo))
                                    .and_then(|f| f.product(h, lf, lo, ops))
                                    .expect("path")
                            })
                            .collect()
                    };
                    let (mut dops, mut sops) = (OpCount::default(), OpCount::default());
                    let (a, b) = (dense(&mut dops), sparse(&mut sops));
                    let dev = a
                        .iter()
                        .zip(&b)
                        .map(|(x, y)| x.max_abs_diff(y))
                        .fold(0.0, f64::max);
                    if !(dev < 1e-10) {
                        return Err(BenchError::GateFailed {
                            variant: format!("eaas ({li},{lf},{lo})"),
                            n: count,
                            deviation: dev,
                            tolerance: 1e-10,
                            seed: cfg.seed,
                        });
                    }
                    let dense_time_s = time_mean(cfg.warmup, cfg.iters, || {
                        black_box(dense(&mut OpCount::default()));
                    });
                    let eaas_time_s = time_mean(cfg.warmup, cfg.iters, || {
                        black_box(sparse(&mut OpCount::default()));
                    });
                    rows.push(TpRow {
                        path: (li, lf, lo),
                        count,
                        channels: cfg.channels,
                        lmax: cfg.lmax,
                        dense_time_s,
                        eaas_time_s,
                        dense_madds: dops.cg_madds,
                        eaas_madds: sops.cg_madds,
                        eaas_rotation_madds: sops.rotation_madds,
                        seed: cfg.seed,
                    });
                }
            }
        }
    }
    Ok(rows)
}
