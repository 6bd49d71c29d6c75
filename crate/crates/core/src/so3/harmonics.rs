//! Real solid and spherical harmonics.
//!
//! Solid harmonics are evaluated as polynomials in Cartesian coordinates, so
//! the origin and exact homogeneity need no special casing:
//!
//! `r^l P_l^m(cos t) (cos m p, sin m p) = Pi_l^m(z, r^2) (Re, Im)((x + i y)^m)`
//!
//! where `Pi` obeys the associated Legendre recurrence lifted to homogeneous
//! polynomials.

use std::f64::consts::PI;

use super::{check_degree, dim};
use crate::{Error, Result};

const UNIT_TOL: f64 = 1e-9;

/// `Y_{l,m}(u)` for `m = -l..=l`. `u` must be a unit vector.
pub fn real_spherical_harmonics(l: usize, u: [f64; 3]) -> Result<Vec<f64>> {
    let norm = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
    if !((norm - 1.0).abs() <= UNIT_TOL) {
        return Err(Error::NonUnitVector { norm });
    }
    check_degree(l)?;
    Ok(solid_harmonics_unchecked(l, u))
}

/// `|r|^l Y_{l,m}(r / |r|)`, continuous at the origin.
pub fn solid_harmonics(l: usize, r: [f64; 3]) -> Result<Vec<f64>> {
    check_degree(l)?;
    Ok(solid_harmonics_unchecked(l, r))
}

/// Normalization `sqrt((2l+1)/(4 pi) (l-m)!/(l+m)!)` for `m >= 0`.
pub(crate) fn harmonic_norm(l: usize, m: usize) -> f64 {
    let mut ratio = 1.0;
    for k in (l - m + 1)..=(l + m) {
        ratio /= k as f64;
    }
    ((2 * l + 1) as f64 / (4.0 * PI) * ratio).sqrt()
}

pub(crate) fn solid_harmonics_unchecked(l: usize, r: [f64; 3]) -> Vec<f64> {
    let mut out = vec![0.0; dim(l)];
    solid_harmonics_into(l, r, &mut out);
    out
}

pub(crate) fn solid_harmonics_into(l: usize, r: [f64; 3], out: &mut [f64]) {
    let [x, y, z] = r;
    let r2 = x * x + y * y + z * z;
    // (x + i y)^m
    let (mut re, mut im) = (1.0, 0.0);
    // (2m - 1)!!
    let mut diag = 1.0;
    for m in 0..=l {
        if m > 0 {
            diag *= (2 * m - 1) as f64;
        }
        let mut prev = 0.0;
        let mut cur = diag;
        for ll in m..l {
            let next = ((2 * ll + 1) as f64 * z * cur - (ll + m) as f64 * r2 * prev)
                / (ll - m + 1) as f64;
            prev = cur;
            cur = next;
        }
        let n = harmonic_norm(l, m);
        if m == 0 {
            out[l] = n * cur;
        } else {
            let s = std::f64::consts::SQRT_2 * n * cur;
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            out[l + m] = sign * s * re;
            out[l - m] = s * im;
        }
        let next_re = re * x - im * y;
        im = re * y + im * x;
        re = next_re;
    }
}
