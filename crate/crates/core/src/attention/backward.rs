use super::aggregate::{dot, AttentionInputs, AttentionShape, AttentionState};
use super::index::NeighborIndex;
use super::memory::AllocTracker;
use super::radial::RadialScalars;
use crate::{Error, Result};

/// Gradients of `sum <grad_m, m>` with respect to the attention inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub q: Vec<f64>,
    pub k: Vec<f64>,
    pub v: Vec<f64>,
    /// Peak working elements excluding inputs and gradient outputs.
    pub peak_elems: usize,
}

/// Backward pass of [`super::stream_aggregate`] by recomputation.
///
/// Per target atom a first sweep rebuilds the softmax statistics and
/// `D_i = <grad_m_i, m_i>`; a second sweep scatters
/// `ds_ij = alpha_ij (phi_ij <grad_m_i, v_j> - D_i)` into the query, key and
/// value gradients. No per-edge buffer is kept.
pub fn stream_aggregate_backward(
    inp: &AttentionInputs<f64>,
    idx: &NeighborIndex,
    radial: &RadialScalars,
    tau: f64,
    grad_m: &[f64],
) -> Result<Gradients> {
    let AttentionShape {
        n,
        heads,
        dk,
        channels: c,
    } = inp.shape();
    if idx.n() != n {
        return Err(Error::ShapeMismatch("neighbor index rows differ from atoms".into()));
    }
    if grad_m.len() != n * heads * c {
        return Err(Error::ShapeMismatch(format!(
            "grad_m has {} entries, expected {}",
            grad_m.len(),
            n * heads * c
        )));
    }
    let tracker = AllocTracker::new();
    let _state = tracker.alloc(2, 0.0);
    let mut gq = vec![0.0; inp.q().len()];
    let mut gk = vec![0.0; inp.k().len()];
    let mut gv = vec![0.0; inp.v().len()];
    for i in 0..n {
        for h in 0..heads {
            let qi = inp.q_row(i, h);
            let g = &grad_m[(i * heads + h) * c..(i * heads + h + 1) * c];
            let mut st = AttentionState::default();
            let mut acc_t = 0.0;
            for (slot, j) in idx.valid(i) {
                let (b, phi) = radial.edge(idx.distance(i, slot));
                let s = tau * dot(qi, inp.k_row(j, h)) + b;
                let (rescale, w) = st.push(s);
                acc_t = acc_t * rescale + w * phi * dot(g, inp.v_row(j, h));
            }
            if st.norm == 0.0 {
                continue;
            }
            let d_i = acc_t / st.norm;
            for (slot, j) in idx.valid(i) {
                let (b, phi) = radial.edge(idx.distance(i, slot));
                let kj = inp.k_row(j, h);
                let s = tau * dot(qi, kj) + b;
                let p = (s - st.max).exp() / st.norm;
                let ds = p * (phi * dot(g, inp.v_row(j, h)) - d_i);
                let (oq, ok) = ((i * heads + h) * dk, (j * heads + h) * dk);
                for d in 0..dk {
                    gq[oq + d] += tau * ds * kj[d];
                    gk[ok + d] += tau * ds * qi[d];
                }
                let ov = (j * heads + h) * c;
                for (x, gc) in gv[ov..ov + c].iter_mut().zip(g) {
                    *x += p * phi * gc;
                }
            }
        }
    }
    Ok(Gradients {
        q: gq,
        k: gk,
        v: gv,
        peak_elems: tracker.peak(),
    })
}
