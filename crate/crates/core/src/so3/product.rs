use super::{cg_real, dim, Block};
use crate::{Error, OpCount, Result};

/// Dense Clebsch-Gordan product of two blocks, channel by channel.
///
/// Channels pair element-wise; a single-channel operand broadcasts against
/// the other. Every `(m1, m2, m_out)` triple of the table is visited, so the
/// cost is `(2l1+1)(2l2+1)(2l_out+1)` multiply-adds per channel. This is the
/// reference every sparse path is compared against.
pub fn tensor_product_dense(u: &Block, v: &Block, lout: usize) -> Result<Block> {
    tensor_product_dense_counted(u, v, lout, &mut OpCount::default())
}

pub fn tensor_product_dense_counted(
    u: &Block,
    v: &Block,
    lout: usize,
    ops: &mut OpCount,
) -> Result<Block> {
    let (l1, l2) = (u.degree(), v.degree());
    let table = cg_real(l1, l2, lout)?;
    let channels = match (u.channels(), v.channels()) {
        (a, b) if a == b => a,
        (1, b) => b,
        (a, 1) => a,
        (a, b) => {
            return Err(Error::ShapeMismatch(format!(
                "cannot pair {a} channels with {b} channels"
            )))
        }
    };
    let (d1, d2, dout) = (dim(l1), dim(l2), dim(lout));
    let coeffs = table.coeffs();
    let mut out = Block::zeros(lout, channels);
    for c in 0..channels {
        let a = u.row(if u.channels() == 1 { 0 } else { c });
        let b = v.row(if v.channels() == 1 { 0 } else { c });
        let o = out.row_mut(c);
        for (mo, slot) in o.iter_mut().enumerate() {
            let mut s = 0.0;
            for (m1, x) in a.iter().enumerate() {
                let row = &coeffs[(mo * d1 + m1) * d2..(mo * d1 + m1 + 1) * d2];
                for (cc, y) in row.iter().zip(b) {
                    s += cc * x * y;
                }
            }
            *slot = s;
        }
    }
    ops.cg_madds += (channels * d1 * d2 * dout) as u64;
    Ok(out)
}
