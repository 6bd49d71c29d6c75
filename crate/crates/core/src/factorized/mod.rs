//! Node-centric factorization of geometric messages.
//!
//! The edge message `(h_j (x) R^l(r_j - r_i))^(l_out)` is rewritten with the
//! translation expansion of solid harmonics,
//! `R^l(a + b) = sum_u w_u (R^u(a) (x) R^(l-u)(b))^(l)`, and a recoupling
//! that moves the target harmonic outside the neighbor sum. What remains is
//! per-node work ([`MessagePlan::source_terms`], [`MessagePlan::target_terms`])
//! and a scalar-weighted sum over edges.

mod block;
mod message;
pub mod translation;

use std::fmt::Write as _;

pub use block::{AttentionBlock, AttentionBlockOutput};
pub use message::{
    edge_centric_message, expansion_origin, factorized_message, source_term, target_couple,
    MessageOptions, MessageOutput, MessagePlan, MessageProblem, SourceKey, TargetTerm,
};
pub use translation::{
    closed_form_translation_weight, recoupling, recoupling_magnitude_from_6j,
    translation_coefficients, Recoupling, TranslationCoefficients, TranslationTerm,
};

use crate::so3::L_MAX;
use crate::{Error, Result};

/// Text dump of the translation weights for filter degrees up to `lmax` and
/// of every recoupling table they use.
///
/// ```text
/// translation l 1 u 0 weight 3.5449077018110318 closed_form 3.5449077018110318
/// recouple h 1 t 0 s 1 l 1 out 1 k 1 x 1
/// ```
pub fn dump_paths(lmax: usize) -> Result<String> {
    if lmax > L_MAX {
        return Err(Error::UnsupportedDegree {
            degree: lmax,
            max: L_MAX,
        });
    }
    let mut out = String::from("# translation: R^l(a+b) = sum_u weight (R^u(a) x R^(l-u)(b))^l\n");
    for l in 0..=lmax {
        let t = translation_coefficients(l)?;
        for term in &t.terms {
            writeln!(
                out,
                "translation l {l} u {} weight {:?} closed_form {:?}",
                term.u, term.weight, term.closed_form
            )
            .unwrap();
        }
    }
    out.push_str("# recouple: (h x (T_t x S_s)^l)^out = sum_k x ((h x S_s)^k x T_t)^out\n");
    for l in 0..=lmax {
        for u in 0..=l {
            for h in 0..=L_MAX {
                for o in 0..=L_MAX {
                    match recoupling(h, u, l - u, l, o) {
                        Ok(r) => {
                            for (k, x) in r.terms {
                                writeln!(
                                    out,
                                    "recouple h {h} t {u} s {} l {l} out {o} k {k} x {x:?}",
                                    l - u
                                )
                                .unwrap();
                            }
                        }
                        Err(Error::UnsupportedPath(_)) => {}
                        Err(e) => return Err(e),
                    }
                }
            }
        }
    }
    Ok(out)
}
