//! Machine-readable statement of every basis convention, as `key=value` lines.

use std::collections::BTreeMap;

use crate::so3::{cg_real, triangle, L_MAX};
use crate::{Error, Result};

/// The conventions manifest. Per-path lines report the measured
/// `sum C^2 / (2 l_out + 1)`, which is 1 for every path.
pub fn manifest() -> String {
    let mut lines = vec![
        "format=equistream-conventions-1".to_string(),
        format!("lmax={L_MAX}"),
        "m_ordering=ascending(-l..l)".to_string(),
        "harmonic_normalization=orthonormal(integral Y^2 dOmega = 1)".to_string(),
        "harmonic_phase=complex_to_real_of_condon_shortley".to_string(),
        "solid_harmonic=|r|^l Y(r/|r|)".to_string(),
        "l1_axis_map=m-1:y,m0:z,m+1:-x".to_string(),
        "feature_layout=channels x (2l+1), row-major".to_string(),
        "transformation_side=rows right-multiplied by D^T (h -> h D^T)".to_string(),
        "wigner_identity=Y(R r) = D(R) Y(r)".to_string(),
        "cg_layout=value-vector (out[m_o] = sum C[m_o,m1,m2] u[m1] v[m2])".to_string(),
        "cg_normalization=unitary(sum_{m1,m2} C^2 = 1 per m_out)".to_string(),
        "cg_odd_path_phase=-i".to_string(),
        "parity=none(SO3 only)".to_string(),
        "eaas_alignment=R r = |r| e_z, minimal rotation about r x e_z".to_string(),
        "eaas_radial_factor=|r|^l_f Y_{l_f,0}(e_z)".to_string(),
        "eaas_even_coefficient=<l_i m_o; l_f 0 | l_o m_o>".to_string(),
        "eaas_odd_coefficient=(-1)^m_o <l_i m_o; l_f 0 | l_o m_o> (source order -m_o)".to_string(),
        "eaas_odd_printed_factor_rescale=-1/2".to_string(),
        "translation_weights=sqrt(C(2l,2u) 4pi (2l+1) / ((2u+1)(2l-2u+1)))".to_string(),
    ];
    for l1 in 0..=L_MAX {
        for l2 in 0..=L_MAX {
            for lo in 0..=L_MAX {
                if !triangle(l1, l2, lo) {
                    continue;
                }
                let t = cg_real(l1, l2, lo).expect("valid path");
                let c = t.frobenius_sq() / (2 * lo + 1) as f64;
                lines.push(format!("cg_norm.{l1}.{l2}.{lo}={c:.15}"));
            }
        }
    }
    let mut out = lines.join("\n");
    out.push('\n');
    out
}

/// Parses `key=value` lines; blank lines and `#` comments are skipped.
pub fn parse_manifest(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for line in text.lines().map(str::trim) {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Convention(format!("manifest line without '=': {line}")))?;
        if map.insert(k.to_string(), v.to_string()).is_some() {
            return Err(Error::Convention(format!("duplicate manifest key {k}")));
        }
    }
    Ok(map)
}
