use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::so3::{
    cg_real, dim, solid_harmonics, tensor_product_dense, triangle, wigner_6j, Block, L_MAX,
};
use crate::{Error, Result};

/// Singular-value ratio below which a fit is declared rank deficient.
const RANK_TOL: f64 = 1e-10;

/// One term of the translation expansion:
/// `R^l(a + b) = sum_u weight_u (R^u(a) (x) R^(l-u)(b))^(l)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranslationTerm {
    /// Degree on the first argument.
    pub u: usize,
    /// Fitted weight.
    pub weight: f64,
    /// Closed-form weight for comparison.
    pub closed_form: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranslationCoefficients {
    pub degree: usize,
    pub terms: Vec<TranslationTerm>,
    /// Max reconstruction error over the fitting samples.
    pub fit_residual: f64,
    /// Smallest over largest singular value of the fitting system.
    pub conditioning: f64,
}

impl TranslationCoefficients {
    pub fn weight(&self, u: usize) -> f64 {
        self.terms[u].weight
    }

    /// Evaluates the expansion at `(a, b)`.
    pub fn reconstruct(&self, a: [f64; 3], b: [f64; 3]) -> Result<Vec<f64>> {
        let l = self.degree;
        let mut out = vec![0.0; dim(l)];
        for t in &self.terms {
            let p = stretched_product(t.u, l - t.u, a, b)?;
            for (o, x) in out.iter_mut().zip(p.data()) {
                *o += t.weight * x;
            }
        }
        Ok(out)
    }
}

fn stretched_product(u: usize, v: usize, a: [f64; 3], b: [f64; 3]) -> Result<Block> {
    let ya = Block::from_vector(&solid_harmonics(u, a)?)?;
    let yb = Block::from_vector(&solid_harmonics(v, b)?)?;
    tensor_product_dense(&ya, &yb, u + v)
}

/// `sqrt(C(2l, 2u) 4 pi (2l + 1) / ((2u + 1)(2l - 2u + 1)))`.
pub fn closed_form_translation_weight(l: usize, u: usize) -> f64 {
    let binom = |n: usize, k: usize| -> f64 {
        (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
    };
    let v = l - u;
    (binom(2 * l, 2 * u) * 4.0 * PI * (2 * l + 1) as f64 / ((2 * u + 1) * (2 * v + 1)) as f64)
        .sqrt()
}

fn fit(l: usize) -> Result<TranslationCoefficients> {
    let unknowns = l + 1;
    let samples = 10 * unknowns;
    let rows = samples * dim(l);
    let mut rng = ChaCha8Rng::seed_from_u64(0x7a11_0000 + l as u64);
    let mut a_mat = DMatrix::zeros(rows, unknowns);
    let mut rhs = DVector::zeros(rows);
    let mut points = Vec::with_capacity(samples);
    for s in 0..samples {
        let mut draw = || -> [f64; 3] { std::array::from_fn(|_| rng.random_range(-1.0..1.0)) };
        let (a, b) = (draw(), draw());
        points.push((a, b));
        let target = solid_harmonics(l, [a[0] + b[0], a[1] + b[1], a[2] + b[2]])?;
        for u in 0..=l {
            let p = stretched_product(u, l - u, a, b)?;
            for m in 0..dim(l) {
                a_mat[(s * dim(l) + m, u)] = p.data()[m];
            }
        }
        for m in 0..dim(l) {
            rhs[s * dim(l) + m] = target[m];
        }
    }
    let svd = a_mat.clone().svd(true, true);
    let sv = &svd.singular_values;
    let conditioning = sv.min() / sv.max();
    if !(conditioning > RANK_TOL) {
        return Err(Error::RankDeficient {
            degree: l,
            ratio: conditioning,
        });
    }
    let w = svd
        .solve(&rhs, RANK_TOL * sv.max())
        .map_err(|e| Error::Convention(e.to_string()))?;
    let fit_residual = (&a_mat * &w - &rhs).amax();
    let terms = (0..=l)
        .map(|u| TranslationTerm {
            u,
            weight: w[u],
            closed_form: closed_form_translation_weight(l, u),
        })
        .collect();
    Ok(TranslationCoefficients {
        degree: l,
        terms,
        fit_residual,
        conditioning,
    })
}

/// Cached translation expansion for degree `l`, fitted by least squares on
/// ten times as many random samples as unknowns.
pub fn translation_coefficients(l: usize) -> Result<Arc<TranslationCoefficients>> {
    static CACHE: [OnceLock<Result<Arc<TranslationCoefficients>>>; L_MAX + 1] =
        [const { OnceLock::new() }; L_MAX + 1];
    if l > L_MAX {
        return Err(Error::UnsupportedDegree {
            degree: l,
            max: L_MAX,
        });
    }
    CACHE[l].get_or_init(|| fit(l).map(Arc::new)).clone()
}

/// Recoupling `(h (x) (T (x) S)^(l))^(out) = sum_k x_k ((h (x) S)^(k) (x) T)^(out)`
/// for degrees `h, t, s`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Recoupling {
    pub h: usize,
    pub t: usize,
    pub s: usize,
    pub l: usize,
    pub out: usize,
    /// `(k, x_k)` for every intermediate degree allowed by both triangles.
    pub terms: Vec<(usize, f64)>,
    /// Max entry of the reconstruction error of the coupling tensor.
    pub residual: f64,
}

/// Coefficients from contracting real coupling tables. Returns an empty
/// term list when `(h, l, out)` or `(t, s, l)` is not a valid triangle.
pub fn recoupling(h: usize, t: usize, s: usize, l: usize, out: usize) -> Result<Recoupling> {
    let max = h.max(t).max(s).max(l).max(out);
    if max > L_MAX {
        return Err(Error::UnsupportedDegree {
            degree: max,
            max: L_MAX,
        });
    }
    let mut result = Recoupling {
        h,
        t,
        s,
        l,
        out,
        terms: Vec::new(),
        residual: 0.0,
    };
    if !triangle(h, l, out) || !triangle(t, s, l) {
        return Ok(result);
    }
    if let Some(k) = (L_MAX + 1..=h + s).find(|&k| triangle(h, s, k) && triangle(k, t, out)) {
        return Err(Error::UnsupportedPath(format!(
            "({h},{t},{s};{l}->{out}) needs intermediate degree {k} > {L_MAX}"
        )));
    }
    let (dh, dt, ds, dout) = (dim(h), dim(t), dim(s), dim(out));
    let at = |o: usize, a: usize, b: usize, c: usize| ((o * dh + a) * dt + b) * ds + c;

    // L[o, mh, mt, ms] = sum_ml C(h,l,out)[o; mh, ml] C(t,s,l)[ml; mt, ms]
    let outer = cg_real(h, l, out)?;
    let inner = cg_real(t, s, l)?;
    let mut lhs = vec![0.0; dout * dh * dt * ds];
    for &(o, ih, il, c1) in outer.nonzero() {
        for &(il2, it, is, c2) in inner.nonzero() {
            if il2 == il {
                lhs[at(o, ih, it, is)] += c1 * c2;
            }
        }
    }
    let mut remainder = lhs.clone();
    for k in 0..=L_MAX {
        if !triangle(h, s, k) || !triangle(k, t, out) {
            continue;
        }
        // R_k[o, mh, mt, ms] = sum_mk C(k,t,out)[o; mk, mt] C(h,s,k)[mk; mh, ms]
        let first = cg_real(h, s, k)?;
        let second = cg_real(k, t, out)?;
        let mut rk = vec![0.0; lhs.len()];
        for &(o, ik, it, c1) in second.nonzero() {
            for &(ik2, ih, is, c2) in first.nonzero() {
                if ik2 == ik {
                    rk[at(o, ih, it, is)] += c1 * c2;
                }
            }
        }
        let norm: f64 = rk.iter().map(|x| x * x).sum();
        let x = rk.iter().zip(&lhs).map(|(a, b)| a * b).sum::<f64>() / norm;
        debug_assert!((norm - dout as f64).abs() < 1e-10);
        for (r, v) in remainder.iter_mut().zip(&rk) {
            *r -= x * v;
        }
        result.terms.push((k, x));
    }
    result.residual = remainder.iter().fold(0.0, |m, x| m.max(x.abs()));
    if result.residual > 1e-10 {
        return Err(Error::Convention(format!(
            "recoupling ({h},{t},{s};{l}->{out}) incomplete, residual {:e}",
            result.residual
        )));
    }
    Ok(result)
}

/// `sqrt((2k + 1)(2l + 1)) |{h s k; t out l}|`, the magnitude every
/// recoupling coefficient must have.
pub fn recoupling_magnitude_from_6j(h: usize, t: usize, s: usize, l: usize, out: usize, k: usize) -> f64 {
    let i = |x: usize| x as i32;
    ((2 * k + 1) as f64 * (2 * l + 1) as f64).sqrt()
        * wigner_6j(i(h), i(s), i(k), i(t), i(out), i(l)).abs()
}
