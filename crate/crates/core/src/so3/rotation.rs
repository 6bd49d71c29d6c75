use nalgebra::{Matrix3, Unit, UnitQuaternion, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{cg_real, check_degree, dim};
use crate::{Error, Result};

const ROTATION_TOL: f64 = 1e-12;

/// A proper rotation of R^3.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rotation(Matrix3<f64>);

impl Rotation {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Checks `R^T R = I` and `det R = 1` to `1e-12`.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        let orth = (m.transpose() * m - Matrix3::identity()).abs().max();
        let det = (m.determinant() - 1.0).abs();
        let residual = orth.max(det);
        if !(residual <= ROTATION_TOL) {
            return Err(Error::InvalidRotation { residual });
        }
        Ok(Self(m))
    }

    pub fn from_rows(rows: [[f64; 3]; 3]) -> Result<Self> {
        Self::from_matrix(Matrix3::from_fn(|i, j| rows[i][j]))
    }

    /// Right-handed rotation by `angle` about `axis`.
    pub fn from_axis_angle(axis: [f64; 3], angle: f64) -> Self {
        let axis = Unit::new_normalize(Vector3::from(axis));
        Self(*nalgebra::Rotation3::from_axis_angle(&axis, angle).matrix())
    }

    pub fn from_quaternion(w: f64, x: f64, y: f64, z: f64) -> Self {
        let q = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(w, x, y, z));
        Self(*q.to_rotation_matrix().matrix())
    }

    /// Haar-uniform rotation.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut q = [0.0f64; 4];
        loop {
            for v in q.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            if q.iter().map(|v| v * v).sum::<f64>() > 1e-12 {
                break;
            }
        }
        Self::from_quaternion(q[0], q[1], q[2], q[3])
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn inverse(&self) -> Self {
        Self(self.0.transpose())
    }

    /// `self * other`: apply `other` first.
    pub fn compose(&self, other: &Rotation) -> Self {
        Self(self.0 * other.0)
    }

    pub fn apply(&self, v: [f64; 3]) -> [f64; 3] {
        let r = self.0 * Vector3::from(v);
        [r.x, r.y, r.z]
    }
}

impl std::ops::Mul for Rotation {
    type Output = Rotation;

    fn mul(self, rhs: Rotation) -> Rotation {
        self.compose(&rhs)
    }
}

/// Real-basis representation matrix of one degree, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WignerD {
    degree: usize,
    data: Vec<f64>,
}

impl WignerD {
    pub fn identity(degree: usize) -> Self {
        let d = dim(degree);
        let mut data = vec![0.0; d * d];
        for i in 0..d {
            data[i * d + i] = 1.0;
        }
        Self { degree, data }
    }

    pub fn from_vec(degree: usize, data: Vec<f64>) -> Result<Self> {
        let d = dim(degree);
        if data.len() != d * d {
            return Err(Error::ShapeMismatch(format!(
                "degree {degree} Wigner matrix needs {} entries, got {}",
                d * d,
                data.len()
            )));
        }
        Ok(Self { degree, data })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * dim(self.degree) + col]
    }

    pub fn transpose(&self) -> WignerD {
        let d = dim(self.degree);
        let mut data = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                data[j * d + i] = self.data[i * d + j];
            }
        }
        WignerD {
            degree: self.degree,
            data,
        }
    }

    pub fn matmul(&self, other: &WignerD) -> WignerD {
        assert_eq!(self.degree, other.degree);
        let d = dim(self.degree);
        let mut data = vec![0.0; d * d];
        for i in 0..d {
            for k in 0..d {
                let a = self.data[i * d + k];
                for j in 0..d {
                    data[i * d + j] += a * other.data[k * d + j];
                }
            }
        }
        WignerD {
            degree: self.degree,
            data,
        }
    }

    /// `out = D v`.
    #[inline]
    pub fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        let d = dim(self.degree);
        for (o, row) in out[..d].iter_mut().zip(self.data.chunks_exact(d)) {
            *o = row.iter().zip(v).map(|(a, b)| a * b).sum();
        }
    }

    /// `out = D^T v`.
    #[inline]
    pub fn apply_transpose_into(&self, v: &[f64], out: &mut [f64]) {
        let d = dim(self.degree);
        out[..d].iter_mut().for_each(|x| *x = 0.0);
        for (row, &vi) in self.data.chunks_exact(d).zip(v) {
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * vi;
            }
        }
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; dim(self.degree)];
        self.apply_into(v, &mut out);
        out
    }

    /// Largest deviation of `D^T D` from the identity.
    pub fn orthogonality_residual(&self) -> f64 {
        let p = self.transpose().matmul(self);
        let d = dim(self.degree);
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                let want = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((p.data[i * d + j] - want).abs());
            }
        }
        worst
    }

    pub fn max_abs_diff(&self, other: &WignerD) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// Degree-1 matrix: the real `l = 1` harmonics are `(y, z, -x)` up to a
/// constant, so `D = P R P^T` with that signed permutation `P`.
fn degree_one(r: &Rotation) -> WignerD {
    // P maps (x, y, z) -> (y, z, -x)
    const P: [[f64; 3]; 3] = [[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [-1.0, 0.0, 0.0]];
    let m = r.matrix();
    let mut data = vec![0.0; 9];
    for i in 0..3 {
        for j in 0..3 {
            let mut s = 0.0;
            for a in 0..3 {
                for b in 0..3 {
                    s += P[i][a] * m[(a, b)] * P[j][b];
                }
            }
            data[i * 3 + j] = s;
        }
    }
    WignerD { degree: 1, data }
}

/// `D^(l)(R)` in the real basis, defined by
/// `solid_harmonics(l, R r) = D^(l)(R) solid_harmonics(l, r)`.
pub fn wigner_d(l: usize, rotation: &Rotation) -> Result<WignerD> {
    check_degree(l)?;
    Ok(wigner_d_all(l, rotation)?.pop().expect("non-empty"))
}

/// `D^(0..=lmax)(R)`.
///
/// Degrees above one follow from projecting `D^(l-1) (x) D^(1)` through the
/// `(l-1, 1) -> l` coupling table `C`, which is an isometry onto the degree-`l`
/// subspace: `D^(l) = C (D^(l-1) (x) D^(1)) C^T`.
pub fn wigner_d_all(lmax: usize, rotation: &Rotation) -> Result<Vec<WignerD>> {
    check_degree(lmax)?;
    let mut out = Vec::with_capacity(lmax + 1);
    out.push(WignerD::identity(0));
    if lmax == 0 {
        return Ok(out);
    }
    let d1 = degree_one(rotation);
    out.push(d1.clone());
    for l in 2..=lmax {
        let table = cg_real(l - 1, 1, l)?;
        let prev = &out[l - 1];
        let d = dim(l);
        // rows[m] = nonzero (a, b, c) with C[m, a, b] = c
        let mut rows: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); d];
        for &(m, a, b, c) in table.nonzero() {
            rows[m].push((a, b, c));
        }
        let mut data = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                let mut s = 0.0;
                for &(a, b, c) in &rows[i] {
                    for &(a2, b2, c2) in &rows[j] {
                        s += c * c2 * prev.get(a, a2) * d1.get(b, b2);
                    }
                }
                data[i * d + j] = s;
            }
        }
        out.push(WignerD { degree: l, data });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::so3::{solid_harmonics, L_MAX};
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_vec(rng: &mut ChaCha8Rng) -> [f64; 3] {
        [
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
        ]
    }

    #[test]
    fn rotation_validation() {
        assert!(Rotation::from_rows([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -1.0]]).is_err());
        assert!(Rotation::from_rows([[2.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = Rotation::random(&mut rng);
        assert!(Rotation::from_matrix(*r.matrix()).is_ok());
    }

    #[test]
    fn identity_maps_to_identity() {
        for l in 0..=L_MAX {
            let d = wigner_d(l, &Rotation::identity()).unwrap();
            assert!(d.max_abs_diff(&WignerD::identity(l)) < 1e-15);
        }
    }

    #[test]
    fn degree_one_is_signed_permutation_of_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let r = Rotation::random(&mut rng);
        let d = wigner_d(1, &r).unwrap();
        let m = r.matrix();
        // (m=-1, 0, 1) <-> (y, z, -x)
        let perm = [(1usize, 1.0), (2, 1.0), (0, -1.0)];
        for i in 0..3 {
            for j in 0..3 {
                let (a, sa) = perm[i];
                let (b, sb) = perm[j];
                assert!((d.get(i, j) - sa * sb * m[(a, b)]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn harmonic_transformation_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let r = Rotation::random(&mut rng);
            let v = random_vec(&mut rng);
            let ds = wigner_d_all(L_MAX, &r).unwrap();
            for (l, d) in ds.iter().enumerate() {
                let lhs = solid_harmonics(l, r.apply(v)).unwrap();
                let rhs = d.apply(&solid_harmonics(l, v).unwrap());
                for (a, b) in lhs.iter().zip(&rhs) {
                    assert!((a - b).abs() < 1e-10, "l={l}");
                }
            }
        }
    }

    #[test]
    fn orthogonal_and_multiplicative() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let (r1, r2) = (Rotation::random(&mut rng), Rotation::random(&mut rng));
            for l in 0..=L_MAX {
                let d1 = wigner_d(l, &r1).unwrap();
                let d2 = wigner_d(l, &r2).unwrap();
                let d12 = wigner_d(l, &(r1 * r2)).unwrap();
                assert!(d1.orthogonality_residual() < 1e-10);
                assert!(d12.max_abs_diff(&d1.matmul(&d2)) < 1e-10);
                let dinv = wigner_d(l, &r1.inverse()).unwrap();
                assert!(dinv.max_abs_diff(&d1.transpose()) < 1e-12);
            }
        }
    }

    #[test]
    fn degree_two_matches_least_squares_fit() {
        // Fit D from Y(R r_k) = D Y(r_k) on 15 generic points.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r = Rotation::random(&mut rng);
        let pts: Vec<[f64; 3]> = (0..15).map(|_| random_vec(&mut rng)).collect();
        let y = DMatrix::from_fn(5, pts.len(), |m, k| solid_harmonics(2, pts[k]).unwrap()[m]);
        let yr = DMatrix::from_fn(5, pts.len(), |m, k| {
            solid_harmonics(2, r.apply(pts[k])).unwrap()[m]
        });
        // D Y = Yr  ->  Y^T D^T = Yr^T
        let fit = y
            .transpose()
            .svd(true, true)
            .solve(&yr.transpose(), 1e-14)
            .unwrap()
            .transpose();
        let d = wigner_d(2, &r).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                assert!((fit[(i, j)] - d.get(i, j)).abs() < 1e-10);
            }
        }
    }
}
