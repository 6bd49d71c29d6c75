//! Randomized invariants checked through the public API.

use equistream_core::attention::{
    attention_weights, dense_reference_aggregate, project_qk, stream_aggregate, AttentionInputs,
    AttentionShape, NeighborIndex, QKProjection, RadialScalars, SENTINEL,
};
use equistream_core::eaas::{build_reindex_rule, AlignedFrame};
use equistream_core::so3::{
    cg_real, rotate_feature, solid_harmonics, tensor_product_dense, tensor_product_dense_counted,
    triangle, wigner_d, Block, IrrepsFeature, IrrepsSpec, Rotation, L_MAX,
};
use equistream_core::{alignment_rotation, eaas_tensor_product, OpCount};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn paths() -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for a in 0..=L_MAX {
        for b in 0..=L_MAX {
            for c in 0..=L_MAX {
                if triangle(a, b, c) {
                    out.push((a, b, c));
                }
            }
        }
    }
    out
}

fn block(rng: &mut ChaCha8Rng, l: usize, c: usize) -> Block {
    let d = (0..c * (2 * l + 1)).map(|_| rng.random_range(-1.0..1.0)).collect();
    Block::from_vec(l, c, d).unwrap()
}

fn vector(rng: &mut ChaCha8Rng) -> [f64; 3] {
    std::array::from_fn(|_| rng.random_range(-1.5..1.5))
}

fn rotated(b: &Block, rot: &Rotation) -> Block {
    b.transformed(&wigner_d(b.degree(), rot).unwrap())
}

#[test]
fn coupling_tables_are_orthonormal_across_outputs() {
    for l1 in 0..=L_MAX {
        for l2 in 0..=L_MAX {
            let outs: Vec<usize> = (0..=L_MAX).filter(|&lo| triangle(l1, l2, lo)).collect();
            for &a in &outs {
                for &b in &outs {
                    let (ta, tb) = (cg_real(l1, l2, a).unwrap(), cg_real(l1, l2, b).unwrap());
                    for ma in -(a as i32)..=a as i32 {
                        for mb in -(b as i32)..=b as i32 {
                            let mut s = 0.0;
                            for m1 in -(l1 as i32)..=l1 as i32 {
                                for m2 in -(l2 as i32)..=l2 as i32 {
                                    s += ta.get(m1, m2, ma) * tb.get(m1, m2, mb);
                                }
                            }
                            let want = if a == b && ma == mb { 1.0 } else { 0.0 };
                            assert!((s - want).abs() < 1e-12, "({l1},{l2}) {a}:{ma} {b}:{mb} -> {s}");
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn rules_follow_parity() {
    for (li, lf, lo) in paths() {
        let rule = build_reindex_rule(li, lf, lo).unwrap();
        for (mo, e) in rule.entries() {
            if (li + lf + lo) % 2 == 0 {
                assert_eq!(e.source, mo, "({li},{lf},{lo})");
            } else {
                assert_eq!(e.source, -mo, "({li},{lf},{lo})");
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dense_product_is_equivariant(seed in any::<u64>(), p in 0usize..65) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let all = paths();
        let (l1, l2, lo) = all[p % all.len()];
        let rot = Rotation::random(&mut rng);
        let (u, v) = (block(&mut rng, l1, 2), block(&mut rng, l2, 2));
        let a = tensor_product_dense(&rotated(&u, &rot), &rotated(&v, &rot), lo).unwrap();
        let b = rotated(&tensor_product_dense(&u, &v, lo).unwrap(), &rot);
        prop_assert!(a.max_abs_diff(&b) < 1e-10);
    }

    #[test]
    fn wigner_is_a_representation(seed in any::<u64>(), l in 0usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b) = (Rotation::random(&mut rng), Rotation::random(&mut rng));
        let lhs = wigner_d(l, &a.compose(&b)).unwrap();
        let rhs = wigner_d(l, &a).unwrap().matmul(&wigner_d(l, &b).unwrap());
        prop_assert!(lhs.max_abs_diff(&rhs) < 1e-10);
    }

    #[test]
    fn harmonics_transform_by_wigner(seed in any::<u64>(), l in 0usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rot = Rotation::random(&mut rng);
        let r = vector(&mut rng);
        let lhs = solid_harmonics(l, rot.apply(r)).unwrap();
        let rhs = wigner_d(l, &rot).unwrap().apply(&solid_harmonics(l, r).unwrap());
        for (x, y) in lhs.iter().zip(&rhs) {
            prop_assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn aligned_product_equals_dense(seed in any::<u64>(), p in 0usize..65, c in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let all = paths();
        let (li, lf, lo) = all[p % all.len()];
        let h = block(&mut rng, li, c);
        let r = vector(&mut rng);
        let y = Block::from_vector(&solid_harmonics(lf, r).unwrap()).unwrap();
        let dense = tensor_product_dense(&h, &y, lo).unwrap();
        let sparse = eaas_tensor_product(&h, r, lf, lo).unwrap();
        prop_assert!(dense.max_abs_diff(&sparse) < 1e-10);
    }

    #[test]
    fn aligned_product_is_equivariant(seed in any::<u64>(), p in 0usize..65) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let all = paths();
        let (li, lf, lo) = all[p % all.len()];
        let rot = Rotation::random(&mut rng);
        let h = block(&mut rng, li, 2);
        let r = vector(&mut rng);
        let a = eaas_tensor_product(&rotated(&h, &rot), rot.apply(r), lf, lo).unwrap();
        let b = rotated(&eaas_tensor_product(&h, r, lf, lo).unwrap(), &rot);
        prop_assert!(a.max_abs_diff(&b) < 1e-10);
    }

    #[test]
    fn gauge_does_not_change_products(seed in any::<u64>(), angle in 0.0f64..6.3, p in 0usize..65) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let all = paths();
        let (li, lf, lo) = all[p % all.len()];
        let h = block(&mut rng, li, 2);
        let r = vector(&mut rng);
        prop_assume!(r.iter().map(|x| x * x).sum::<f64>() > 1e-6);
        let base = alignment_rotation(r).unwrap();
        let a = AlignedFrame::from_alignment(base.with_gauge(angle), L_MAX).unwrap();
        let b = AlignedFrame::from_alignment(base, L_MAX).unwrap();
        let x = a.product(&h, lf, lo, &mut OpCount::default()).unwrap();
        let y = b.product(&h, lf, lo, &mut OpCount::default()).unwrap();
        prop_assert!(x.max_abs_diff(&y) < 1e-10);
    }

    #[test]
    fn sparse_coupling_work_is_bounded(seed in any::<u64>(), p in 0usize..65, c in 1usize..9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let all = paths();
        let (li, lf, lo) = all[p % all.len()];
        let h = block(&mut rng, li, c);
        let r = vector(&mut rng);
        let mut sparse = OpCount::default();
        AlignedFrame::new(r, L_MAX).unwrap().product(&h, lf, lo, &mut sparse).unwrap();
        prop_assert!(sparse.cg_madds <= ((2 * lo + 1) * c) as u64);
        let y = Block::from_vector(&solid_harmonics(lf, r).unwrap()).unwrap();
        let mut dense = OpCount::default();
        tensor_product_dense_counted(&h, &y, lo, &mut dense).unwrap();
        prop_assert!(dense.cg_madds >= sparse.cg_madds);
    }

    #[test]
    fn attention_weights_ignore_rotation(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = IrrepsSpec::new(vec![(0, 2), (1, 2), (2, 1)]).unwrap();
        let proj = QKProjection::random(&spec, 2, 2, 1, &mut rng).unwrap();
        let n = 6;
        let feats: Vec<IrrepsFeature> = (0..n)
            .map(|_| {
                let flat: Vec<f64> = (0..spec.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
                IrrepsFeature::from_flat(spec.clone(), &flat).unwrap()
            })
            .collect();
        let rot = Rotation::random(&mut rng);
        let lists: Vec<Vec<(usize, f64)>> =
            (0..n).map(|i| (0..n).filter(|&j| j != i).map(|j| (j, 1.0 + j as f64 * 0.5)).collect()).collect();
        let idx = NeighborIndex::from_lists(n - 1, &lists).unwrap();
        let alpha = |fs: &[IrrepsFeature]| {
            let (mut q, mut k) = (Vec::new(), Vec::new());
            for f in fs {
                let (a, b) = project_qk(f, &proj).unwrap();
                q.extend(a);
                k.extend(b);
            }
            let shape = AttentionShape { n, heads: 2, dk: proj.head_dim(), channels: 1 };
            let inp = AttentionInputs::new(shape, q, k, vec![0.0; n * 2]).unwrap();
            attention_weights(&inp, &idx, &RadialScalars::cosine_cutoff(6.0), shape.tau()).unwrap()
        };
        let rf: Vec<IrrepsFeature> = feats.iter().map(|f| rotate_feature(f, &rot).unwrap()).collect();
        let (a, b) = (alpha(&feats), alpha(&rf));
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn padding_is_neutral(seed in any::<u64>(), extra in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, k) = (12, 4);
        let table: Vec<i64> = (0..n * k)
            .map(|_| if rng.random_bool(0.3) { SENTINEL } else { rng.random_range(0..n) as i64 })
            .collect();
        let dist: Vec<f64> = (0..n * k).map(|_| rng.random_range(0.5..5.0)).collect();
        let idx = NeighborIndex::new(n, k, table, Some(dist)).unwrap();
        let padded = idx.with_padding(extra);
        let shape = AttentionShape { n, heads: 2, dk: 3, channels: 4 };
        let inp = AttentionInputs::<f64>::random(shape, 1.0, &mut rng);
        let rad = RadialScalars::cosine_cutoff(6.0);
        let a = dense_reference_aggregate(&inp, &idx, &rad, 0.5).unwrap();
        let b = dense_reference_aggregate(&inp, &padded, &rad, 0.5).unwrap();
        prop_assert!(a.messages.iter().zip(&b.messages).all(|(x, y)| x.to_bits() == y.to_bits()));
        let s = stream_aggregate(&inp, &idx, &rad, 0.5).unwrap();
        let t = stream_aggregate(&inp, &padded, &rad, 0.5).unwrap();
        for (x, y) in s.messages.iter().zip(&t.messages) {
            prop_assert!((x - y).abs() < 1e-15);
        }
    }
}
