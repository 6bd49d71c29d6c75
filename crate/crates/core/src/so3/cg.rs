//! Clebsch-Gordan coefficients and the 6j symbol.
//!
//! Complex-basis values come from Racah's closed-form sums. Real tables are
//! obtained by pushing the complex coefficients through the fixed change of
//! basis on all three legs; odd `l1 + l2 + l_out` paths come out purely
//! imaginary and are multiplied by `-i`.

use std::sync::{Arc, OnceLock};

use nalgebra::Complex;

use super::{dim, triangle, L_MAX};
use crate::{Error, Result};

const FACT_LEN: usize = 48;

fn fact(n: i64) -> f64 {
    static TABLE: OnceLock<[f64; FACT_LEN]> = OnceLock::new();
    let t = TABLE.get_or_init(|| {
        let mut t = [1.0; FACT_LEN];
        for k in 1..FACT_LEN {
            t[k] = t[k - 1] * k as f64;
        }
        t
    });
    debug_assert!(n >= 0 && (n as usize) < FACT_LEN);
    t[n as usize]
}

fn sign(k: i64) -> f64 {
    if k.rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    }
}

fn itriangle(a: i64, b: i64, c: i64) -> bool {
    a >= 0 && b >= 0 && c >= 0 && c <= a + b && a <= b + c && b <= a + c
}

/// `<j1 m1; j2 m2 | J M>` in the Condon-Shortley convention. Selection rule
/// violations return zero.
pub fn complex_cg(j1: i32, m1: i32, j2: i32, m2: i32, j: i32, m: i32) -> f64 {
    let (j1, m1, j2, m2, j, m) = (j1 as i64, m1 as i64, j2 as i64, m2 as i64, j as i64, m as i64);
    if m != m1 + m2 || !itriangle(j1, j2, j) {
        return 0.0;
    }
    if m1.abs() > j1 || m2.abs() > j2 || m.abs() > j {
        return 0.0;
    }
    let pre = ((2 * j + 1) as f64 * fact(j + j1 - j2) * fact(j - j1 + j2) * fact(j1 + j2 - j)
        / fact(j1 + j2 + j + 1))
    .sqrt();
    let pre = pre
        * (fact(j + m) * fact(j - m) * fact(j1 - m1) * fact(j1 + m1) * fact(j2 - m2) * fact(j2 + m2))
            .sqrt();
    let kmin = 0.max(j2 - j - m1).max(j1 - j + m2);
    let kmax = (j1 + j2 - j).min(j1 - m1).min(j2 + m2);
    let mut sum = 0.0;
    for k in kmin..=kmax {
        sum += sign(k)
            / (fact(k)
                * fact(j1 + j2 - j - k)
                * fact(j1 - m1 - k)
                * fact(j2 + m2 - k)
                * fact(j - j2 + m1 + k)
                * fact(j - j1 - m2 + k));
    }
    pre * sum
}

fn delta(a: i64, b: i64, c: i64) -> f64 {
    (fact(a + b - c) * fact(a - b + c) * fact(-a + b + c) / fact(a + b + c + 1)).sqrt()
}

/// The 6j symbol `{j1 j2 j3; j4 j5 j6}` by Racah's formula.
pub fn wigner_6j(j1: i32, j2: i32, j3: i32, j4: i32, j5: i32, j6: i32) -> f64 {
    let [j1, j2, j3, j4, j5, j6] = [j1, j2, j3, j4, j5, j6].map(i64::from);
    if !(itriangle(j1, j2, j3)
        && itriangle(j1, j5, j6)
        && itriangle(j4, j2, j6)
        && itriangle(j4, j5, j3))
    {
        return 0.0;
    }
    let a = [j1 + j2 + j3, j1 + j5 + j6, j4 + j2 + j6, j4 + j5 + j3];
    let b = [j1 + j2 + j4 + j5, j2 + j3 + j5 + j6, j3 + j1 + j6 + j4];
    let tmin = *a.iter().max().unwrap();
    let tmax = *b.iter().min().unwrap();
    let mut sum = 0.0;
    for t in tmin..=tmax {
        let den: f64 = a.iter().map(|&x| fact(t - x)).product::<f64>()
            * b.iter().map(|&x| fact(x - t)).product::<f64>();
        sum += sign(t) * fact(t + 1) / den;
    }
    delta(j1, j2, j3) * delta(j1, j5, j6) * delta(j4, j2, j6) * delta(j4, j5, j3) * sum
}

/// Rows of the complex-to-real change of basis for degree `l`:
/// `x_m = sum_k U[m][k] z_k`, returned as sparse `(k + l, U[m][k])` lists
/// indexed by `m + l`.
pub fn real_basis(l: usize) -> Vec<Vec<(usize, Complex<f64>)>> {
    let li = l as i64;
    let h = std::f64::consts::FRAC_1_SQRT_2;
    (-li..=li)
        .map(|m| {
            let s = sign(m);
            let idx = |k: i64| (k + li) as usize;
            if m < 0 {
                vec![
                    (idx(m), Complex::new(0.0, h)),
                    (idx(-m), Complex::new(0.0, -s * h)),
                ]
            } else if m == 0 {
                vec![(idx(0), Complex::new(1.0, 0.0))]
            } else {
                vec![(idx(m), Complex::new(h, 0.0)), (idx(-m), Complex::new(s * h, 0.0))]
            }
        })
        .collect()
}

/// Real-basis coupling coefficients for one `(l1, l2) -> l_out` path.
#[derive(Clone, Debug, PartialEq)]
pub struct CgTable {
    l1: usize,
    l2: usize,
    lout: usize,
    coeffs: Vec<f64>,
    nonzero: Vec<(usize, usize, usize, f64)>,
    imag_residue: f64,
}

impl CgTable {
    pub fn path(&self) -> (usize, usize, usize) {
        (self.l1, self.l2, self.lout)
    }

    /// Coefficient for orders `(m1, m2) -> m_out`.
    pub fn get(&self, m1: i32, m2: i32, mout: i32) -> f64 {
        let (d1, d2) = (dim(self.l1), dim(self.l2));
        let i1 = (m1 + self.l1 as i32) as usize;
        let i2 = (m2 + self.l2 as i32) as usize;
        let io = (mout + self.lout as i32) as usize;
        self.coeffs[(io * d1 + i1) * d2 + i2]
    }

    /// Dense storage, `m_out`-major then `m1`, `m2`, indices offset by `l`.
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Nonzero entries as `(m_out + l_out, m1 + l1, m2 + l2, value)`.
    pub fn nonzero(&self) -> &[(usize, usize, usize, f64)] {
        &self.nonzero
    }

    /// Largest discarded imaginary part (after the path phase) in the build.
    pub fn imag_residue(&self) -> f64 {
        self.imag_residue
    }

    /// `sum over (m1, m2, m_out)` of the squared coefficients; equals
    /// `2 l_out + 1` for unitary tables.
    pub fn frobenius_sq(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum()
    }
}

pub(crate) const REAL_TOL: f64 = 1e-12;

/// Builds the real table without caching.
pub fn build_cg_real(l1: usize, l2: usize, lout: usize) -> Result<CgTable> {
    if !triangle(l1, l2, lout) {
        return Err(Error::TriangleViolation { l1, l2, lout });
    }
    let (u1, u2, uo) = (real_basis(l1), real_basis(l2), real_basis(lout));
    let (d1, d2, dout) = (dim(l1), dim(l2), dim(lout));
    let (i1, i2, io) = (l1 as i32, l2 as i32, lout as i32);
    let odd = (l1 + l2 + lout) % 2 == 1;
    let mut coeffs = vec![0.0; dout * d1 * d2];
    let mut residue: f64 = 0.0;
    for (ro, row_o) in uo.iter().enumerate() {
        for (r1, row_1) in u1.iter().enumerate() {
            for (r2, row_2) in u2.iter().enumerate() {
                let mut acc = Complex::new(0.0, 0.0);
                for &(ko, vo) in row_o {
                    for &(k1, v1) in row_1 {
                        for &(k2, v2) in row_2 {
                            let c = complex_cg(
                                i1,
                                k1 as i32 - i1,
                                i2,
                                k2 as i32 - i2,
                                io,
                                ko as i32 - io,
                            );
                            if c != 0.0 {
                                acc += vo * v1.conj() * v2.conj() * c;
                            }
                        }
                    }
                }
                if odd {
                    acc *= Complex::new(0.0, -1.0);
                }
                residue = residue.max(acc.im.abs());
                coeffs[(ro * d1 + r1) * d2 + r2] = acc.re;
            }
        }
    }
    if residue > REAL_TOL {
        return Err(Error::ComplexResidue {
            path: (l1, l2, lout),
            residue,
        });
    }
    // Entries at rounding level are structural zeros.
    for c in coeffs.iter_mut() {
        if c.abs() < 1e-14 {
            *c = 0.0;
        }
    }
    let mut nonzero = Vec::new();
    for io in 0..dout {
        for a in 0..d1 {
            for b in 0..d2 {
                let c = coeffs[(io * d1 + a) * d2 + b];
                if c != 0.0 {
                    nonzero.push((io, a, b, c));
                }
            }
        }
    }
    Ok(CgTable {
        l1,
        l2,
        lout,
        coeffs,
        nonzero,
        imag_residue: residue,
    })
}

type Slot = OnceLock<Result<Arc<CgTable>>>;
const N: usize = L_MAX + 1;

/// Cached real-basis table for `(l1, l2) -> l_out`.
pub fn cg_real(l1: usize, l2: usize, lout: usize) -> Result<Arc<CgTable>> {
    static CACHE: [[[Slot; N]; N]; N] =
        [const { [const { [const { OnceLock::new() }; N] }; N] }; N];
    let max = l1.max(l2).max(lout);
    if max > L_MAX {
        return Err(Error::UnsupportedDegree {
            degree: max,
            max: L_MAX,
        });
    }
    if !triangle(l1, l2, lout) {
        return Err(Error::TriangleViolation { l1, l2, lout });
    }
    CACHE[l1][l2][lout]
        .get_or_init(|| build_cg_real(l1, l2, lout).map(Arc::new))
        .clone()
}
