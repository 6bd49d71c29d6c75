//! Property suites behind `equistream verify`.
//!
//! Every property draws its instances from a generator keyed by the base
//! seed, the property name and the instance number, so a failure replays
//! exactly with the same `--seed`.

use std::collections::BTreeMap;
use std::fmt;
use std::time::Instant;

use clap::ValueEnum;
use equistream_core::attention::{
    dense_reference_aggregate, masked_dense_aggregate, stream_aggregate,
    stream_aggregate_backward, stream_aggregate_parallel, AttentionInputs, AttentionMask,
    AttentionShape, NeighborIndex, QKProjection, RadialScalars, ValueProjection,
};
use equistream_core::eaas::{build_reindex_rule, closed_form_coefficient, AlignedFrame};
use equistream_core::factorized::{
    closed_form_translation_weight, edge_centric_message, factorized_message, recoupling,
    recoupling_magnitude_from_6j, translation_coefficients, AttentionBlock, MessageOptions,
};
use equistream_core::so3::{
    cg_real, rotate_feature, solid_harmonics, tensor_product_dense, triangle, wigner_d, Block,
    IrrepsFeature, IrrepsSpec, Rotation, L_MAX,
};
use equistream_core::{alignment_rotation, eaas_tensor_product, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::gen;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
pub enum Suite {
    All,
    So3,
    Eaas,
    Attention,
    Gradient,
    Factorized,
    Equivariance,
}

impl Suite {
    pub const CONCRETE: [Suite; 6] = [
        Suite::So3,
        Suite::Eaas,
        Suite::Attention,
        Suite::Gradient,
        Suite::Factorized,
        Suite::Equivariance,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::All => "all",
            Suite::So3 => "so3",
            Suite::Eaas => "eaas",
            Suite::Attention => "attention",
            Suite::Gradient => "gradient",
            Suite::Factorized => "factorized",
            Suite::Equivariance => "equivariance",
        }
    }
}

/// Every property name, in run order.
pub const PROPERTIES: [&str; 22] = [
    "pole_sparsity",
    "harmonic_equivariance",
    "wigner_homomorphism",
    "cg_unitarity",
    "eaas_exactness",
    "rule_closed_form",
    "worked_cases",
    "gauge_invariance",
    "stream_vs_dense",
    "shift_invariance",
    "masked_dense_vs_stream",
    "parallel_vs_serial",
    "single_precision",
    "backward_vs_finite_differences",
    "factorized_exactness",
    "translated_recentred",
    "translation_weights",
    "recoupling_6j",
    "dense_product",
    "eaas_product",
    "factorized_message",
    "attention_block",
];

/// Outcome of one property over all of its instances.
#[derive(Clone, Debug, PartialEq)]
pub struct Property {
    pub suite: Suite,
    pub name: &'static str,
    pub worst: f64,
    pub tolerance: f64,
    pub instances: usize,
    /// First instance whose residual exceeded the tolerance.
    pub failing_instance: Option<usize>,
    pub seconds: f64,
}

impl Property {
    pub fn passed(&self) -> bool {
        self.failing_instance.is_none()
    }
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}/{} worst={:.3e} tol={:.1e} instances={} time={:.2}s",
            if self.passed() { "PASS" } else { "FAIL" },
            self.suite.name(),
            self.name,
            self.worst,
            self.tolerance,
            self.instances,
            self.seconds
        )?;
        if let Some(i) = self.failing_instance {
            write!(f, " failing_instance={i}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Per-property tolerance overrides keyed by property name.
    pub tolerances: BTreeMap<String, f64>,
}

/// Generator for instance `i` of `property`.
pub fn instance_rng(seed: u64, property: &str, i: usize) -> ChaCha8Rng {
    let stream = property
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3));
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
    rng.set_stream(stream);
    rng
}

struct Runner<'a> {
    opts: &'a VerifyOptions,
    suite: Suite,
    out: Vec<Property>,
}

impl Runner<'_> {
    /// Runs `f` on `count` instances; `f` returns the residual to compare.
    fn check(
        &mut self,
        name: &'static str,
        tolerance: f64,
        count: usize,
        mut f: impl FnMut(&mut ChaCha8Rng, usize) -> Result<f64>,
    ) {
        let tolerance = self.opts.tolerances.get(name).copied().unwrap_or(tolerance);
        let start = Instant::now();
        let mut worst = 0.0f64;
        let mut failing = None;
        for i in 0..count {
            let mut rng = instance_rng(self.opts.seed, name, i);
            let r = match f(&mut rng, i) {
                Ok(r) if r.is_nan() => f64::INFINITY,
                Ok(r) => r,
                Err(e) => {
                    log::error!("{name} instance {i}: {e}");
                    f64::INFINITY
                }
            };
            worst = worst.max(r);
            if r > tolerance && failing.is_none() {
                failing = Some(i);
            }
        }
        self.out.push(Property {
            suite: self.suite,
            name,
            worst,
            tolerance,
            instances: count,
            failing_instance: failing,
            seconds: start.elapsed().as_secs_f64(),
        });
    }
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn blocks_diff(a: &[Block], b: &[Block]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max(x.max_abs_diff(y)))
}

fn paths(lmax: usize) -> impl Iterator<Item = (usize, usize, usize)> {
    (0..=lmax).flat_map(move |li| {
        (0..=lmax).flat_map(move |lf| {
            (0..=lmax).filter_map(move |lo| triangle(li, lf, lo).then_some((li, lf, lo)))
        })
    })
}

fn so3(r: &mut Runner) {
    r.check("pole_sparsity", 1e-12, 1000, |rng, _| {
        let v = gen::vector(rng, 0.5, 2.0);
        let aligned = alignment_rotation(v)?.rotation().apply(v);
        let mut worst = 0.0f64;
        for l in 0..=L_MAX {
            let y = solid_harmonics(l, aligned)?;
            for (i, x) in y.iter().enumerate() {
                if i != l {
                    worst = worst.max(x.abs());
                }
            }
        }
        Ok(worst)
    });
    r.check("harmonic_equivariance", 1e-10, 100, |rng, _| {
        let rot = Rotation::random(rng);
        let v = gen::vector(rng, 0.5, 2.0);
        let mut worst = 0.0f64;
        for l in 0..=L_MAX {
            let lhs = solid_harmonics(l, rot.apply(v))?;
            let rhs = wigner_d(l, &rot)?.apply(&solid_harmonics(l, v)?);
            worst = worst.max(max_diff(&lhs, &rhs));
        }
        Ok(worst)
    });
    r.check("wigner_homomorphism", 1e-12, 100, |rng, _| {
        let (a, b) = (Rotation::random(rng), Rotation::random(rng));
        let mut worst = 0.0f64;
        for l in 0..=L_MAX {
            let (da, db) = (wigner_d(l, &a)?, wigner_d(l, &b)?);
            let dab = wigner_d(l, &a.compose(&b))?;
            worst = worst
                .max(dab.max_abs_diff(&da.matmul(&db)))
                .max(da.orthogonality_residual());
        }
        Ok(worst)
    });
    r.check("cg_unitarity", 1e-12, 1, |_, _| {
        let mut worst = 0.0f64;
        for (l1, l2, lo) in paths(L_MAX) {
            let t = cg_real(l1, l2, lo)?;
            worst = worst
                .max((t.frobenius_sq() - (2 * lo + 1) as f64).abs())
                .max(t.imag_residue());
        }
        Ok(worst)
    });
}

/// Random path and inputs for one EAAS draw; every tenth draw sits on the
/// `+z` or `-z` axis.
fn eaas_draw(rng: &mut ChaCha8Rng, i: usize) -> (IrrepsFeature, [f64; 3]) {
    let spec = IrrepsSpec::uniform(L_MAX, 2).expect("valid spec");
    let h = gen::feature(rng, &spec);
    let r = match i % 10 {
        0 => [0.0, 0.0, rng.random_range(0.3..2.0)],
        5 => [0.0, 0.0, -rng.random_range(0.3..2.0)],
        _ => gen::vector(rng, 0.2, 2.0),
    };
    (h, r)
}

fn eaas(r: &mut Runner) {
    r.check("eaas_exactness", 1e-10, 10_000, |rng, i| {
        let (h, v) = eaas_draw(rng, i);
        let frame = AlignedFrame::new(v, L_MAX)?;
        let mut worst = 0.0f64;
        for (li, lf, lo) in paths(L_MAX) {
            let hb = &h.blocks()[li];
            let y = Block::from_vector(&solid_harmonics(lf, v)?)?;
            let dense = tensor_product_dense(hb, &y, lo)?;
            let sparse = frame.product(hb, lf, lo, &mut Default::default())?;
            worst = worst.max(dense.max_abs_diff(&sparse));
        }
        Ok(worst)
    });
    r.check("rule_closed_form", 1e-12, 1, |_, _| {
        let mut worst = 0.0f64;
        for (li, lf, lo) in paths(L_MAX) {
            let rule = build_reindex_rule(li, lf, lo)?;
            for mo in -(lo as i32)..=lo as i32 {
                let want = closed_form_coefficient(li, lf, lo, mo);
                let got = rule.entry(mo).map_or(0.0, |e| e.coefficient);
                worst = worst.max((want - got).abs());
            }
        }
        Ok(worst)
    });
    r.check("worked_cases", 0.0, 1, |_, _| {
        let scalar = build_reindex_rule(1, 1, 0)?;
        let vector = build_reindex_rule(1, 1, 1)?;
        let ok = scalar.len() == 1
            && scalar.entry(0).is_some_and(|e| e.source == 0)
            && vector.entry(0).is_none();
        Ok(if ok { 0.0 } else { 1.0 })
    });
    r.check("gauge_invariance", 1e-10, 100, |rng, _| {
        let spec = IrrepsSpec::uniform(2, 3).expect("valid spec");
        let h = gen::feature(rng, &spec);
        let v = gen::vector(rng, 0.3, 2.0);
        let base = alignment_rotation(v)?;
        let turned = AlignedFrame::from_alignment(base.with_gauge(rng.random_range(0.0..6.3)), 2)?;
        let frame = AlignedFrame::from_alignment(base, 2)?;
        let mut worst = 0.0f64;
        for (li, lf, lo) in paths(2) {
            let a = frame.product(&h.blocks()[li], lf, lo, &mut Default::default())?;
            let b = turned.product(&h.blocks()[li], lf, lo, &mut Default::default())?;
            worst = worst.max(a.max_abs_diff(&b));
        }
        Ok(worst)
    });
}

fn attention_instance(
    rng: &mut ChaCha8Rng,
    i: usize,
    distinct: bool,
) -> (AttentionInputs<f64>, NeighborIndex) {
    let n = rng.random_range(1..40);
    let k = rng.random_range(1..12);
    let shape = AttentionShape {
        n,
        heads: 1 + i % 4,
        dk: 1 + i % 7,
        channels: 1 + i % 5,
    };
    let inp = AttentionInputs::random(shape, 2.0, rng);
    (inp, gen::neighbor_index(rng, n, k, distinct))
}

fn attention(r: &mut Runner) {
    let rad = gen::radial(0.0);
    r.check("stream_vs_dense", 1e-12, 100, |rng, i| {
        let (inp, idx) = attention_instance(rng, i, false);
        let tau = inp.shape().tau();
        let a = stream_aggregate(&inp, &idx, &rad, tau)?;
        let b = dense_reference_aggregate(&inp, &idx, &rad, tau)?;
        let finite = a.messages.iter().all(|x| x.is_finite());
        Ok(if finite && a.isolated == b.isolated {
            max_diff(&a.messages, &b.messages)
        } else {
            f64::INFINITY
        })
    });
    let shifted = gen::radial(1e4);
    r.check("shift_invariance", 1e-10, 20, |rng, i| {
        let (inp, idx) = attention_instance(rng, i, false);
        let tau = inp.shape().tau();
        let a = stream_aggregate(&inp, &idx, &rad, tau)?;
        let b = stream_aggregate(&inp, &idx, &shifted, tau)?;
        if !b.messages.iter().all(|x| x.is_finite()) {
            return Ok(f64::INFINITY);
        }
        Ok(max_diff(&a.messages, &b.messages) / max_abs(&a.messages).max(1e-300))
    });
    r.check("masked_dense_vs_stream", 1e-12, 30, |rng, i| {
        let (inp, idx) = attention_instance(rng, i, true);
        let tau = inp.shape().tau();
        let mask = AttentionMask::from_index(&idx)?;
        let a = stream_aggregate(&inp, &idx, &rad, tau)?;
        let b = masked_dense_aggregate(&inp, &idx, &mask, &rad, tau)?;
        Ok(max_diff(&a.messages, &b.messages))
    });
    r.check("parallel_vs_serial", 0.0, 30, |rng, i| {
        let (inp, idx) = attention_instance(rng, i, false);
        let tau = inp.shape().tau();
        let a = stream_aggregate(&inp, &idx, &rad, tau)?;
        let b = stream_aggregate_parallel(&inp, &idx, &rad, tau)?;
        Ok(max_diff(&a.messages, &b.messages))
    });
    r.check("single_precision", 1e-5, 30, |rng, i| {
        let (inp, idx) = attention_instance(rng, i, false);
        let tau = inp.shape().tau();
        let a = stream_aggregate(&inp, &idx, &rad, tau)?;
        let b = stream_aggregate(&inp.cast::<f32>(), &idx, &rad, tau)?;
        let b: Vec<f64> = b.messages.iter().map(|&x| x as f64).collect();
        Ok(max_diff(&a.messages, &b) / max_abs(&a.messages).max(1e-300))
    });
}

fn gradient(r: &mut Runner) {
    let rad = gen::radial(0.0);
    r.check("backward_vs_finite_differences", 1e-4, 10, |rng, i| {
        let shape = AttentionShape {
            n: 8,
            heads: 1 + i % 2,
            dk: 3,
            channels: 6,
        };
        let inp = AttentionInputs::random(shape, 1.0, rng);
        let idx = gen::neighbor_index(rng, 8, 4, false);
        let tau = shape.tau();
        let gm: Vec<f64> = (0..8 * shape.heads * 6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g = stream_aggregate_backward(&inp, &idx, &rad, tau, &gm)?;
        let loss = |x: &AttentionInputs<f64>| -> Result<f64> {
            let m = dense_reference_aggregate(x, &idx, &rad, tau)?.messages;
            Ok(m.iter().zip(&gm).map(|(a, b)| a * b).sum())
        };
        let step = 1e-5;
        let mut worst = 0.0f64;
        for which in 0..3 {
            let analytic = [&g.q, &g.k, &g.v][which];
            for e in 0..analytic.len() {
                let (mut plus, mut minus) = (inp.clone(), inp.clone());
                let (p, m) = match which {
                    0 => (&mut plus.q_mut()[e], &mut minus.q_mut()[e]),
                    1 => (&mut plus.k_mut()[e], &mut minus.k_mut()[e]),
                    _ => (&mut plus.v_mut()[e], &mut minus.v_mut()[e]),
                };
                *p += step;
                *m -= step;
                let fd = (loss(&plus)? - loss(&minus)?) / (2.0 * step);
                let err = (fd - analytic[e]).abs() / fd.abs().max(analytic[e].abs()).max(1e-3);
                worst = worst.max(err);
            }
        }
        Ok(worst)
    });
}

fn factorized(r: &mut Runner) {
    let centred = MessageOptions { recentre: true };
    r.check("factorized_exactness", 1e-9, 50, |rng, i| {
        let n = rng.random_range(4..=32);
        let prob = gen::message_problem(rng, n, 8, 2.0);
        let l = i % 3;
        let mut worst = 0.0f64;
        for out in 0..=L_MAX {
            let e = edge_centric_message(&prob, l, out)?;
            let f = factorized_message(&prob, l, out, &centred)?;
            worst = worst.max(blocks_diff(&e.blocks, &f.blocks));
        }
        Ok(worst)
    });
    r.check("translated_recentred", 1e-9, 50, |rng, i| {
        let n = rng.random_range(4..=32);
        let prob = gen::message_problem(rng, n, 8, 2.0);
        let t = gen::direction(rng).map(|x| 100.0 * x);
        let moved = prob.translated(t);
        let l = i % 3;
        let mut worst = 0.0f64;
        for out in 0..=L_MAX {
            let e = edge_centric_message(&moved, l, out)?;
            let f = factorized_message(&moved, l, out, &centred)?;
            worst = worst.max(blocks_diff(&e.blocks, &f.blocks));
        }
        Ok(worst)
    });
    r.check("translation_weights", 1e-10, 1, |_, _| {
        let mut worst = 0.0f64;
        for l in 0..=L_MAX {
            let c = translation_coefficients(l)?;
            worst = worst.max(c.fit_residual);
            for u in 0..=l {
                worst = worst.max((c.weight(u) - closed_form_translation_weight(l, u)).abs());
            }
        }
        Ok(worst)
    });
    r.check("recoupling_6j", 1e-12, 1, |_, _| {
        let mut worst = 0.0f64;
        for h in 0..=2 {
            for l in 0..=2 {
                for u in 0..=l {
                    for out in 0..=L_MAX {
                        let rc = recoupling(h, u, l - u, l, out)?;
                        worst = worst.max(rc.residual);
                        for &(k, x) in &rc.terms {
                            let mag = recoupling_magnitude_from_6j(h, u, l - u, l, out, k);
                            worst = worst.max((x.abs() - mag).abs());
                        }
                    }
                }
            }
        }
        Ok(worst)
    });
}

/// Block, features, positions and neighbor table of one block instance.
pub type BlockInstance = (AttentionBlock, Vec<IrrepsFeature>, Vec<[f64; 3]>, NeighborIndex);

/// Small attention block on atoms in a box with a radius graph.
pub fn attention_block_instance(rng: &mut ChaCha8Rng, n: usize) -> Result<BlockInstance> {
    let spec_in = IrrepsSpec::new(vec![(0, 3), (1, 2), (2, 2)])?;
    let spec_v = IrrepsSpec::new(vec![(0, 2), (1, 1), (2, 1)])?;
    let features: Vec<IrrepsFeature> = (0..n).map(|_| gen::feature(rng, &spec_in)).collect();
    let positions: Vec<[f64; 3]> =
        (0..n).map(|_| std::array::from_fn(|_| rng.random_range(-2.0..2.0))).collect();
    let idx = gen::radius_graph(&positions, 4.0);
    let block = AttentionBlock {
        qk: QKProjection::random(&spec_in, 2, 2, 1, rng)?,
        value: ValueProjection::random(&spec_in, &spec_v, 2, rng)?,
        radial: RadialScalars::cosine_cutoff(5.0),
        filter_degree: 1,
        out_degree: 2,
        options: MessageOptions::default(),
    };
    Ok((block, features, positions, idx))
}

fn equivariance(r: &mut Runner) {
    let rotate = |b: &Block, rot: &Rotation| -> Result<Block> {
        Ok(b.transformed(&wigner_d(b.degree(), rot)?))
    };
    r.check("dense_product", 1e-9, 100, |rng, _| {
        let rot = Rotation::random(rng);
        let v = gen::vector(rng, 0.3, 2.0);
        let mut worst = 0.0f64;
        for (li, lf, lo) in paths(2) {
            let h = gen::block(rng, li, 3);
            let y = Block::from_vector(&solid_harmonics(lf, v)?)?;
            let yr = Block::from_vector(&solid_harmonics(lf, rot.apply(v))?)?;
            let a = tensor_product_dense(&rotate(&h, &rot)?, &yr, lo)?;
            let b = rotate(&tensor_product_dense(&h, &y, lo)?, &rot)?;
            worst = worst.max(a.max_abs_diff(&b));
        }
        Ok(worst)
    });
    r.check("eaas_product", 1e-9, 100, |rng, _| {
        let rot = Rotation::random(rng);
        let v = gen::vector(rng, 0.3, 2.0);
        let mut worst = 0.0f64;
        for (li, lf, lo) in paths(2) {
            let h = gen::block(rng, li, 3);
            let a = eaas_tensor_product(&rotate(&h, &rot)?, rot.apply(v), lf, lo)?;
            let b = rotate(&eaas_tensor_product(&h, v, lf, lo)?, &rot)?;
            worst = worst.max(a.max_abs_diff(&b));
        }
        Ok(worst)
    });
    r.check("factorized_message", 1e-9, 100, |rng, i| {
        let prob = gen::message_problem(rng, 10, 5, 2.0);
        let rot = Rotation::random(rng);
        let (l, out) = [(1, 1), (2, 3), (2, 0), (0, 2)][i % 4];
        let opts = MessageOptions::default();
        let a = factorized_message(&prob.rotated(&rot)?, l, out, &opts)?;
        let b = factorized_message(&prob, l, out, &opts)?;
        let b: Vec<Block> = b.blocks.iter().map(|x| rotate(x, &rot)).collect::<Result<_>>()?;
        Ok(blocks_diff(&a.blocks, &b))
    });
    r.check("attention_block", 1e-9, 100, |rng, _| {
        let (block, features, positions, idx) = attention_block_instance(rng, 8)?;
        let rot = Rotation::random(rng);
        let rf: Vec<IrrepsFeature> =
            features.iter().map(|f| rotate_feature(f, &rot)).collect::<Result<_>>()?;
        let rp: Vec<[f64; 3]> = positions.iter().map(|&p| rot.apply(p)).collect();
        let a = block.forward(&rf, &rp, &idx)?;
        let b = block.forward(&features, &positions, &idx)?;
        let mut worst = 0.0f64;
        for (ma, mb) in a.messages.iter().zip(&b.messages) {
            for (x, y) in ma.iter().zip(mb) {
                worst = worst.max(x.max_abs_diff(&rotate(y, &rot)?));
            }
        }
        Ok(worst)
    });
}

/// Runs the selected suite (or all of them) and returns one entry per
/// property, in a fixed order.
pub fn run(suite: Suite, opts: &VerifyOptions) -> Vec<Property> {
    let selected: Vec<Suite> = match suite {
        Suite::All => Suite::CONCRETE.to_vec(),
        s => vec![s],
    };
    let mut out = Vec::new();
    for s in selected {
        let mut r = Runner {
            opts,
            suite: s,
            out: Vec::new(),
        };
        match s {
            Suite::So3 => so3(&mut r),
            Suite::Eaas => eaas(&mut r),
            Suite::Attention => attention(&mut r),
            Suite::Gradient => gradient(&mut r),
            Suite::Factorized => factorized(&mut r),
            Suite::Equivariance => equivariance(&mut r),
            Suite::All => unreachable!(),
        }
        out.extend(r.out);
    }
    out
}
