//! Equivariant axis-aligned sparsification.
//!
//! A product `h (x) R^(l_f)(r)` is evaluated as
//!
//! 1. rotate `h` into the frame where `r` lies on `+z` (`h~ = D_R h`),
//! 2. apply the re-indexing rule: on the pole only `m_f = 0` survives, and the
//!    parity of `l_i + l_f + l_o` decides whether output order `m_o` reads
//!    input order `m_o` (even) or `-m_o` (odd),
//! 3. rotate the result back with `D_R^T`.
//!
//! Step 2 costs one multiply-add per output order and channel.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::so3::rotation::wigner_d_all;
use crate::so3::{
    cg_real, complex_cg, dim, solid_harmonics, tensor_product_dense_counted, triangle, Block,
    Rotation, WignerD, L_MAX,
};
use crate::{Error, OpCount, Result};

/// Directions shorter than this are treated as the origin.
pub const DEFAULT_EPS: f64 = 1e-8;

/// A rotation taking `r` onto `|r| e_z`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentRotation {
    source: [f64; 3],
    rotation: Rotation,
}

impl AlignmentRotation {
    pub fn source(&self) -> [f64; 3] {
        self.source
    }

    pub fn rotation(&self) -> &Rotation {
        &self.rotation
    }

    pub fn norm(&self) -> f64 {
        norm(self.source)
    }

    /// Same alignment composed with a turn of `angle` about `e_z`. Every
    /// gauge is a valid alignment.
    pub fn with_gauge(&self, angle: f64) -> Self {
        Self {
            source: self.source,
            rotation: Rotation::from_axis_angle([0.0, 0.0, 1.0], angle).compose(&self.rotation),
        }
    }
}

fn norm(r: [f64; 3]) -> f64 {
    (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt()
}

/// Alignment with the default degeneracy threshold.
pub fn alignment_rotation(r: [f64; 3]) -> Result<AlignmentRotation> {
    alignment_rotation_with_eps(r, DEFAULT_EPS)
}

/// Minimal rotation taking `r / |r|` to `e_z`: about `r x e_z` by the angle
/// between them. At `r` exactly on `-z` the axis is undefined and a half turn
/// about `e_x` is used.
pub fn alignment_rotation_with_eps(r: [f64; 3], eps: f64) -> Result<AlignmentRotation> {
    let n = norm(r);
    if !(n > eps) {
        return Err(Error::DegenerateDirection { norm: n, eps });
    }
    let u = [r[0] / n, r[1] / n, r[2] / n];
    // v = u x e_z, c = u . e_z
    let v = [u[1], -u[0], 0.0];
    let c = u[2];
    let vv = v[0] * v[0] + v[1] * v[1];
    let m = if vv == 0.0 {
        if c > 0.0 {
            [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
        } else {
            [[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]]
        }
    } else {
        // R = c I + [v]x + v v^T / (1 + c); 1 + c = |v|^2 / (1 - c) avoids
        // cancellation in the southern hemisphere.
        let k = if c >= 0.0 { 1.0 / (1.0 + c) } else { (1.0 - c) / vv };
        [
            [c + k * v[0] * v[0], k * v[0] * v[1], v[1]],
            [k * v[0] * v[1], c + k * v[1] * v[1], -v[0]],
            [-v[1], v[0], c],
        ]
    };
    Ok(AlignmentRotation {
        source: r,
        rotation: Rotation::from_matrix(nalgebra::Matrix3::from_fn(|i, j| m[i][j]))
            .or_else(|_| {
                // rounding can push the determinant check past 1e-12 for
                // inputs far from unit scale; re-orthonormalize once
                let q = nalgebra::Matrix3::from_fn(|i, j| m[i][j]);
                let svd = q.svd(true, true);
                Rotation::from_matrix(svd.u.unwrap() * svd.v_t.unwrap())
            })?,
    })
}

/// `|r|^l_f Y_{l_f,0}(e_z)`: the only nonzero component of the aligned
/// geometric encoding.
pub fn radial_factor(r_norm: f64, lf: usize) -> f64 {
    r_norm.powi(lf as i32) * ((2 * lf + 1) as f64 / (4.0 * PI)).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReindexEntry {
    /// Input order feeding this output order.
    pub source: i32,
    pub coefficient: f64,
}

/// Sparse map for one `(l_i, l_f, l_o)` path in the aligned frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReindexRule {
    path: (usize, usize, usize),
    entries: Vec<Option<ReindexEntry>>,
}

impl ReindexRule {
    pub fn path(&self) -> (usize, usize, usize) {
        self.path
    }

    /// `(l_i + l_f + l_o) mod 2`.
    pub fn parity(&self) -> usize {
        (self.path.0 + self.path.1 + self.path.2) % 2
    }

    pub fn is_empty(&self) -> bool {
        self.entries.iter().all(Option::is_none)
    }

    /// Entry for output order `m_o`, if that order receives anything.
    pub fn entry(&self, mo: i32) -> Option<ReindexEntry> {
        let idx = mo + self.path.2 as i32;
        if idx < 0 {
            return None;
        }
        self.entries.get(idx as usize).copied().flatten()
    }

    /// `(m_o, entry)` pairs in ascending `m_o`.
    pub fn entries(&self) -> impl Iterator<Item = (i32, ReindexEntry)> + '_ {
        let lo = self.path.2 as i32;
        self.entries
            .iter()
            .enumerate()
            .filter_map(move |(i, e)| e.map(|e| (i as i32 - lo, e)))
    }

    pub fn len(&self) -> usize {
        self.entries.iter().flatten().count()
    }
}

/// Closed-form rule coefficient in this crate's real basis:
/// `<l_i m_o; l_f 0 | l_o m_o>`, times `(-1)^m_o` when the parity is odd.
pub fn closed_form_coefficient(li: usize, lf: usize, lo: usize, mo: i32) -> f64 {
    let c = complex_cg(li as i32, mo, lf as i32, 0, lo as i32, mo);
    if (li + lf + lo) % 2 == 1 && mo.rem_euclid(2) == 1 {
        -c
    } else {
        c
    }
}

fn build_rule(li: usize, lf: usize, lo: usize) -> Result<ReindexRule> {
    if !triangle(li, lf, lo) {
        return Ok(ReindexRule {
            path: (li, lf, lo),
            entries: vec![None; dim(lo)],
        });
    }
    let table = cg_real(li, lf, lo)?;
    let odd = (li + lf + lo) % 2 == 1;
    let mut entries = vec![None; dim(lo)];
    for (idx, slot) in entries.iter_mut().enumerate() {
        let mo = idx as i32 - lo as i32;
        let mut found: Option<ReindexEntry> = None;
        for mi in -(li as i32)..=li as i32 {
            let c = table.get(mi, 0, mo);
            if c == 0.0 {
                continue;
            }
            let expected = if odd { -mo } else { mo };
            if mi != expected || found.is_some() {
                return Err(Error::Convention(format!(
                    "path ({li},{lf},{lo}): order {mo} reads {mi}, expected only {expected}"
                )));
            }
            found = Some(ReindexEntry {
                source: mi,
                coefficient: c,
            });
        }
        *slot = found;
    }
    Ok(ReindexRule {
        path: (li, lf, lo),
        entries,
    })
}

/// Cached rule for `(l_i, l_f, l_o)`; triangle violations give an empty rule.
pub fn build_reindex_rule(li: usize, lf: usize, lo: usize) -> Result<Arc<ReindexRule>> {
    const N: usize = L_MAX + 1;
    type Slot = OnceLock<Result<Arc<ReindexRule>>>;
    static CACHE: [[[Slot; N]; N]; N] =
        [const { [const { [const { OnceLock::new() }; N] }; N] }; N];
    let max = li.max(lf).max(lo);
    if max > L_MAX {
        return Err(Error::UnsupportedDegree {
            degree: max,
            max: L_MAX,
        });
    }
    CACHE[li][lf][lo]
        .get_or_init(|| build_rule(li, lf, lo).map(Arc::new))
        .clone()
}

/// Applies the sparse rule to an aligned block:
/// `out[m_o] = coefficient(m_o) * h~[source(m_o)] * r_mag_factor`.
pub fn apply_reindex(
    rule: &ReindexRule,
    aligned: &Block,
    r_mag_factor: f64,
    ops: &mut OpCount,
) -> Result<Block> {
    let (li, _, lo) = rule.path;
    if aligned.degree() != li {
        return Err(Error::ShapeMismatch(format!(
            "rule expects degree {li}, block has degree {}",
            aligned.degree()
        )));
    }
    let channels = aligned.channels();
    let mut out = Block::zeros(lo, channels);
    let active: Vec<(usize, usize, f64)> = rule
        .entries()
        .map(|(mo, e)| {
            (
                (mo + lo as i32) as usize,
                (e.source + li as i32) as usize,
                e.coefficient * r_mag_factor,
            )
        })
        .collect();
    for c in 0..channels {
        let src = aligned.row(c);
        let dst = out.row_mut(c);
        for &(o, i, w) in &active {
            dst[o] = w * src[i];
        }
    }
    ops.cg_madds += (channels * active.len()) as u64;
    Ok(out)
}

#[derive(Clone, Debug)]
enum FrameKind {
    Aligned {
        alignment: AlignmentRotation,
        wigner: Vec<WignerD>,
    },
    Origin,
}

/// Alignment data for one position, reusable across many products.
#[derive(Clone, Debug)]
pub struct AlignedFrame {
    r: [f64; 3],
    norm: f64,
    lmax: usize,
    kind: FrameKind,
}

impl AlignedFrame {
    /// Frame for products with degrees up to `lmax`. Positions within
    /// [`DEFAULT_EPS`] of the origin fall back to dense products.
    pub fn new(r: [f64; 3], lmax: usize) -> Result<Self> {
        Self::with_eps(r, lmax, DEFAULT_EPS)
    }

    pub fn with_eps(r: [f64; 3], lmax: usize, eps: f64) -> Result<Self> {
        match alignment_rotation_with_eps(r, eps) {
            Ok(alignment) => Self::from_alignment(alignment, lmax),
            Err(Error::DegenerateDirection { .. }) => Ok(Self {
                r,
                norm: norm(r),
                lmax,
                kind: FrameKind::Origin,
            }),
            Err(e) => Err(e),
        }
    }

    pub fn from_alignment(alignment: AlignmentRotation, lmax: usize) -> Result<Self> {
        let wigner = wigner_d_all(lmax, alignment.rotation())?;
        Ok(Self {
            r: alignment.source(),
            norm: alignment.norm(),
            lmax,
            kind: FrameKind::Aligned { alignment, wigner },
        })
    }

    pub fn is_degenerate(&self) -> bool {
        matches!(self.kind, FrameKind::Origin)
    }

    pub fn alignment(&self) -> Option<&AlignmentRotation> {
        match &self.kind {
            FrameKind::Aligned { alignment, .. } => Some(alignment),
            FrameKind::Origin => None,
        }
    }

    fn wigner(&self, l: usize) -> Result<&WignerD> {
        match &self.kind {
            FrameKind::Aligned { wigner, .. } => wigner.get(l).ok_or(Error::UnsupportedDegree {
                degree: l,
                max: self.lmax,
            }),
            FrameKind::Origin => Err(Error::DegenerateDirection {
                norm: self.norm,
                eps: DEFAULT_EPS,
            }),
        }
    }

    /// `h~ = D_R h` row-wise.
    pub fn align(&self, h: &Block) -> Result<Block> {
        Ok(h.transformed(self.wigner(h.degree())?))
    }

    /// Inverse of [`AlignedFrame::align`].
    pub fn unalign(&self, b: &Block) -> Result<Block> {
        Ok(b.transformed_transpose(self.wigner(b.degree())?))
    }

    /// `(h (x) R^(l_f)(r))^(l_o)`.
    pub fn product(&self, h: &Block, lf: usize, lo: usize, ops: &mut OpCount) -> Result<Block> {
        let li = h.degree();
        if !triangle(li, lf, lo) {
            return Err(Error::TriangleViolation {
                l1: li,
                l2: lf,
                lout: lo,
            });
        }
        match &self.kind {
            FrameKind::Origin => {
                log::debug!("position {:?} at origin, dense fallback", self.r);
                let y = Block::from_vector(&solid_harmonics(lf, self.r)?)?;
                tensor_product_dense_counted(h, &y, lo, ops)
            }
            FrameKind::Aligned { .. } => {
                let (di, dout) = (self.wigner(li)?, self.wigner(lo)?);
                let aligned = h.transformed(di);
                let rule = build_reindex_rule(li, lf, lo)?;
                let sparse = apply_reindex(&rule, &aligned, radial_factor(self.norm, lf), ops)?;
                let c = h.channels() as u64;
                ops.rotation_madds += c * (dim(li) * dim(li) + dim(lo) * dim(lo)) as u64;
                Ok(sparse.transformed_transpose(dout))
            }
        }
    }
}

/// `(h (x) R^(l_f)(r))^(l_o)` through the aligned frame.
pub fn eaas_tensor_product(h: &Block, r: [f64; 3], lf: usize, lo: usize) -> Result<Block> {
    eaas_tensor_product_counted(h, r, lf, lo, &mut OpCount::default())
}

pub fn eaas_tensor_product_counted(
    h: &Block,
    r: [f64; 3],
    lf: usize,
    lo: usize,
    ops: &mut OpCount,
) -> Result<Block> {
    let lmax = h.degree().max(lo);
    AlignedFrame::new(r, lmax)?.product(h, lf, lo, ops)
}

/// Text dump of every rule with degrees up to `lmax`.
///
/// ```text
/// path 1 1 1 parity odd
///   m_o -1 m_i 1 coeff -0.7071067811865476
/// ```
pub fn dump_rules(lmax: usize) -> Result<String> {
    let mut out = String::from("# eaas re-indexing rules: out[m_o] = coeff * aligned[m_i] * |r|^l_f Y_{l_f,0}(e_z)\n");
    for li in 0..=lmax {
        for lf in 0..=lmax {
            for lo in 0..=lmax {
                if !triangle(li, lf, lo) {
                    continue;
                }
                let rule = build_reindex_rule(li, lf, lo)?;
                let parity = if rule.parity() == 0 { "even" } else { "odd" };
                writeln!(out, "path {li} {lf} {lo} parity {parity}").unwrap();
                for (mo, e) in rule.entries() {
                    writeln!(out, "  m_o {mo} m_i {} coeff {:?}", e.source, e.coefficient).unwrap();
                }
            }
        }
    }
    Ok(out)
}

/// Parses [`dump_rules`] output back into `(path, [(m_o, m_i, coeff)])`.
#[allow(clippy::type_complexity)]
pub fn parse_rules(text: &str) -> Result<Vec<((usize, usize, usize), Vec<(i32, i32, f64)>)>> {
    let bad = |line: &str| Error::Fixture(format!("malformed rule line: {line}"));
    let mut rules: Vec<((usize, usize, usize), Vec<(i32, i32, f64)>)> = Vec::new();
    for line in text.lines() {
        let t: Vec<&str> = line.split_whitespace().collect();
        match t.as_slice() {
            [] => {}
            [first, ..] if first.starts_with('#') => {}
            ["path", a, b, c, "parity", _] => {
                let p = |s: &str| s.parse::<usize>().map_err(|_| bad(line));
                rules.push(((p(a)?, p(b)?, p(c)?), Vec::new()));
            }
            ["m_o", mo, "m_i", mi, "coeff", c] => {
                let last = rules.last_mut().ok_or_else(|| bad(line))?;
                last.1.push((
                    mo.parse().map_err(|_| bad(line))?,
                    mi.parse().map_err(|_| bad(line))?,
                    c.parse().map_err(|_| bad(line))?,
                ));
            }
            _ => return Err(bad(line)),
        }
    }
    Ok(rules)
}
