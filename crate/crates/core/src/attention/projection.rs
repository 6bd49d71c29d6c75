use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::so3::{dim, Block, IrrepsFeature, IrrepsSpec};
use crate::{Error, Result};

/// Query/key weights for one degree in one head. Each matrix maps the
/// channel axis only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QKWeights {
    pub q1: DMatrix<f64>,
    pub q2: DMatrix<f64>,
    pub k1: DMatrix<f64>,
    pub k2: DMatrix<f64>,
}

/// Per-head, per-degree query/key projections.
///
/// For each degree the flat query is `W1 h` flattened channel-major followed
/// by `(W2 h)^T` flattened order-major; all degrees are concatenated. Keys use
/// the same layout, so `q . k` pairs like with like and is rotation invariant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QKProjection {
    spec: IrrepsSpec,
    weights: Vec<Vec<QKWeights>>,
}

fn random_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    let s = 1.0 / (cols as f64).sqrt();
    DMatrix::from_fn(rows, cols, |_, _| {
        let x: f64 = StandardNormal.sample(rng);
        x * s
    })
}

impl QKProjection {
    /// `weights[head][entry]`, one entry per degree of `spec`.
    pub fn new(spec: IrrepsSpec, weights: Vec<Vec<QKWeights>>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidSpec("projection needs at least one head".into()));
        }
        let mut head_dim = None;
        for head in &weights {
            if head.len() != spec.entries().len() {
                return Err(Error::ShapeMismatch(format!(
                    "{} weight sets for {} degrees",
                    head.len(),
                    spec.entries().len()
                )));
            }
            let mut d = 0;
            for (w, &(l, c)) in head.iter().zip(spec.entries()) {
                if w.q1.ncols() != c || w.q2.ncols() != c || w.k1.ncols() != c || w.k2.ncols() != c
                {
                    return Err(Error::ShapeMismatch(format!(
                        "degree {l}: weights must have {c} columns"
                    )));
                }
                if w.q1.nrows() != w.k1.nrows() || w.q2.nrows() != w.k2.nrows() {
                    return Err(Error::ShapeMismatch(format!(
                        "degree {l}: query and key widths differ"
                    )));
                }
                for m in [&w.q1, &w.q2, &w.k1, &w.k2] {
                    if m.iter().any(|x| !x.is_finite()) {
                        return Err(Error::InvalidSpec("non-finite weight".into()));
                    }
                }
                d += (w.q1.nrows() + w.q2.nrows()) * dim(l);
            }
            if *head_dim.get_or_insert(d) != d {
                return Err(Error::ShapeMismatch("heads have different widths".into()));
            }
        }
        Ok(Self { spec, weights })
    }

    /// Random weights with `p1`/`p2` output channels per degree.
    pub fn random<R: Rng + ?Sized>(
        spec: &IrrepsSpec,
        heads: usize,
        p1: usize,
        p2: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let weights = (0..heads)
            .map(|_| {
                spec.entries()
                    .iter()
                    .map(|&(_, c)| QKWeights {
                        q1: random_matrix(rng, p1, c),
                        q2: random_matrix(rng, p2, c),
                        k1: random_matrix(rng, p1, c),
                        k2: random_matrix(rng, p2, c),
                    })
                    .collect()
            })
            .collect();
        Self::new(spec.clone(), weights)
    }

    pub fn spec(&self) -> &IrrepsSpec {
        &self.spec
    }

    pub fn heads(&self) -> usize {
        self.weights.len()
    }

    /// Per-head query/key width.
    pub fn head_dim(&self) -> usize {
        self.weights[0]
            .iter()
            .zip(self.spec.entries())
            .map(|(w, &(l, _))| (w.q1.nrows() + w.q2.nrows()) * dim(l))
            .sum()
    }
}

fn block_matrix(b: &Block) -> DMatrix<f64> {
    DMatrix::from_row_slice(b.channels(), b.dim(), b.data())
}

fn push_mixed(out: &mut Vec<f64>, w1: &DMatrix<f64>, w2: &DMatrix<f64>, h: &DMatrix<f64>) {
    let a = w1 * h;
    for p in 0..a.nrows() {
        out.extend(a.row(p).iter());
    }
    // (W2 h)^T flattened row-major is W2 h read column by column
    let b = w2 * h;
    out.extend(b.iter());
}

fn check_spec(h: &IrrepsFeature, spec: &IrrepsSpec) -> Result<()> {
    if h.spec() != spec {
        return Err(Error::ShapeMismatch(format!(
            "feature spec {:?} does not match projection spec {:?}",
            h.spec().entries(),
            spec.entries()
        )));
    }
    Ok(())
}

/// Flat `(q, k)` for one atom, each `heads * head_dim` long, head-major.
pub fn project_qk(h: &IrrepsFeature, proj: &QKProjection) -> Result<(Vec<f64>, Vec<f64>)> {
    check_spec(h, &proj.spec)?;
    let d = proj.head_dim() * proj.heads();
    let (mut q, mut k) = (Vec::with_capacity(d), Vec::with_capacity(d));
    for head in &proj.weights {
        for (w, block) in head.iter().zip(h.blocks()) {
            let hm = block_matrix(block);
            push_mixed(&mut q, &w.q1, &w.q2, &hm);
            push_mixed(&mut k, &w.k1, &w.k2, &hm);
        }
    }
    Ok((q, k))
}

/// [`project_qk`] over a batch, rows concatenated.
pub fn project_qk_batch(
    features: &[IrrepsFeature],
    proj: &QKProjection,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut q = Vec::new();
    let mut k = Vec::new();
    for h in features {
        let (qi, ki) = project_qk(h, proj)?;
        q.extend(qi);
        k.extend(ki);
    }
    Ok((q, k))
}

/// Per-head, per-degree channel mixing producing value features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueProjection {
    spec_in: IrrepsSpec,
    spec_out: IrrepsSpec,
    weights: Vec<Vec<DMatrix<f64>>>,
}

impl ValueProjection {
    /// `weights[head][entry]` maps `spec_in` channels of a degree to
    /// `spec_out` channels of the same degree.
    pub fn new(
        spec_in: IrrepsSpec,
        spec_out: IrrepsSpec,
        weights: Vec<Vec<DMatrix<f64>>>,
    ) -> Result<Self> {
        let degrees_in: Vec<usize> = spec_in.degrees().collect();
        let degrees_out: Vec<usize> = spec_out.degrees().collect();
        if degrees_in != degrees_out {
            return Err(Error::ShapeMismatch(
                "value projection must keep the set of degrees".into(),
            ));
        }
        if weights.is_empty() {
            return Err(Error::InvalidSpec("projection needs at least one head".into()));
        }
        for head in &weights {
            if head.len() != degrees_in.len() {
                return Err(Error::ShapeMismatch("one matrix per degree expected".into()));
            }
            for ((w, &(_, ci)), &(_, co)) in
                head.iter().zip(spec_in.entries()).zip(spec_out.entries())
            {
                if w.shape() != (co, ci) {
                    return Err(Error::ShapeMismatch(format!(
                        "value weight {:?}, expected ({co}, {ci})",
                        w.shape()
                    )));
                }
            }
        }
        Ok(Self {
            spec_in,
            spec_out,
            weights,
        })
    }

    pub fn random<R: Rng + ?Sized>(
        spec_in: &IrrepsSpec,
        spec_out: &IrrepsSpec,
        heads: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let weights = (0..heads)
            .map(|_| {
                spec_in
                    .entries()
                    .iter()
                    .zip(spec_out.entries())
                    .map(|(&(_, ci), &(_, co))| random_matrix(rng, co, ci))
                    .collect()
            })
            .collect();
        Self::new(spec_in.clone(), spec_out.clone(), weights)
    }

    pub fn heads(&self) -> usize {
        self.weights.len()
    }

    pub fn spec_out(&self) -> &IrrepsSpec {
        &self.spec_out
    }

    /// One value feature per head.
    pub fn apply(&self, h: &IrrepsFeature) -> Result<Vec<IrrepsFeature>> {
        check_spec(h, &self.spec_in)?;
        self.weights
            .iter()
            .map(|head| {
                let blocks = head
                    .iter()
                    .zip(h.blocks())
                    .map(|(w, b)| {
                        let m = w * block_matrix(b);
                        let mut data = Vec::with_capacity(m.len());
                        for r in 0..m.nrows() {
                            data.extend(m.row(r).iter());
                        }
                        Block::from_vec(b.degree(), m.nrows(), data)
                    })
                    .collect::<Result<Vec<_>>>()?;
                IrrepsFeature::new(self.spec_out.clone(), blocks)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::so3::{rotate_feature, Rotation};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_feature(rng: &mut ChaCha8Rng, spec: &IrrepsSpec) -> IrrepsFeature {
        let flat: Vec<f64> = (0..spec.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        IrrepsFeature::from_flat(spec.clone(), &flat).unwrap()
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn scalar_only_is_plain_linear_map() {
        let spec = IrrepsSpec::new(vec![(0, 3)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let proj = QKProjection::random(&spec, 1, 2, 1, &mut rng).unwrap();
        let h = random_feature(&mut rng, &spec);
        let (q, _) = project_qk(&h, &proj).unwrap();
        let w = &proj.weights[0][0];
        let x = nalgebra::DVector::from_row_slice(h.blocks()[0].data());
        let want: Vec<f64> = (&w.q1 * &x).iter().chain((&w.q2 * &x).iter()).copied().collect();
        assert_eq!(q, want);
    }

    #[test]
    fn identity_weights_repeat_blocks() {
        let spec = IrrepsSpec::new(vec![(0, 1), (1, 1)]).unwrap();
        let eye = DMatrix::identity(1, 1);
        let w = QKWeights {
            q1: eye.clone(),
            q2: eye.clone(),
            k1: eye.clone(),
            k2: eye,
        };
        let proj = QKProjection::new(spec.clone(), vec![vec![w.clone(), w]]).unwrap();
        let h = IrrepsFeature::from_flat(spec, &[2.0, 0.1, 0.2, 0.3]).unwrap();
        let (q, k) = project_qk(&h, &proj).unwrap();
        assert_eq!(q, vec![2.0, 2.0, 0.1, 0.2, 0.3, 0.1, 0.2, 0.3]);
        assert_eq!(q, k);
    }

    #[test]
    fn transpose_half_is_order_major() {
        let spec = IrrepsSpec::new(vec![(1, 2)]).unwrap();
        let eye = DMatrix::identity(2, 2);
        let w = QKWeights {
            q1: eye.clone(),
            q2: eye.clone(),
            k1: eye.clone(),
            k2: eye,
        };
        let proj = QKProjection::new(spec.clone(), vec![vec![w]]).unwrap();
        let h = IrrepsFeature::from_flat(spec, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let (q, _) = project_qk(&h, &proj).unwrap();
        assert_eq!(&q[..6], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(&q[6..], &[1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
    }

    #[test]
    fn scores_are_rotation_invariant() {
        let spec = IrrepsSpec::new(vec![(0, 4), (1, 3), (2, 2)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let proj = QKProjection::random(&spec, 3, 3, 2, &mut rng).unwrap();
        for _ in 0..20 {
            let (hi, hj) = (random_feature(&mut rng, &spec), random_feature(&mut rng, &spec));
            let rot = Rotation::random(&mut rng);
            let (qi, _) = project_qk(&hi, &proj).unwrap();
            let (_, kj) = project_qk(&hj, &proj).unwrap();
            let (qr, _) = project_qk(&rotate_feature(&hi, &rot).unwrap(), &proj).unwrap();
            let (_, kr) = project_qk(&rotate_feature(&hj, &rot).unwrap(), &proj).unwrap();
            let d = proj.head_dim();
            for h in 0..3 {
                let s = h * d..(h + 1) * d;
                let a = dot(&qi[s.clone()], &kj[s.clone()]);
                let b = dot(&qr[s.clone()], &kr[s]);
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn shape_errors() {
        let spec = IrrepsSpec::new(vec![(0, 2)]).unwrap();
        let other = IrrepsSpec::new(vec![(0, 3)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let proj = QKProjection::random(&spec, 1, 1, 1, &mut rng).unwrap();
        assert!(project_qk(&IrrepsFeature::zeros(other.clone()), &proj).is_err());
        let bad = QKWeights {
            q1: DMatrix::zeros(1, 3),
            q2: DMatrix::zeros(1, 2),
            k1: DMatrix::zeros(1, 2),
            k2: DMatrix::zeros(1, 2),
        };
        assert!(QKProjection::new(spec.clone(), vec![vec![bad]]).is_err());
        assert!(ValueProjection::random(&spec, &IrrepsSpec::new(vec![(1, 2)]).unwrap(), 1, &mut rng)
            .is_err());
    }

    #[test]
    fn value_projection_is_equivariant() {
        let spec = IrrepsSpec::new(vec![(0, 2), (1, 2), (2, 1)]).unwrap();
        let out = IrrepsSpec::new(vec![(0, 1), (1, 3), (2, 2)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let vp = ValueProjection::random(&spec, &out, 2, &mut rng).unwrap();
        let h = random_feature(&mut rng, &spec);
        let rot = Rotation::random(&mut rng);
        let a = vp.apply(&rotate_feature(&h, &rot).unwrap()).unwrap();
        let b = vp.apply(&h).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!(x.max_abs_diff(&rotate_feature(y, &rot).unwrap()) < 1e-12);
        }
    }
}
