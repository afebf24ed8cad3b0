//! Square tiling with `B = ⌊√(M/4)⌋`, following the two-phase pseudocode
//! line by line. Phase 1 materialises `A = exp(QKᵀ)` block by block and the
//! row sums; Phase 2 reads them back to form `D⁻¹ A V`. Boundary blocks are
//! clipped.

use super::{finish, prepare, Algorithm, AttentionInstance, KernelError, KernelResult, Layout, QkMarks};
use crate::dense::block_range;
use crate::memory::{MemoryHierarchy, Op, Slot, Word};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TilingOptions {
    /// Extra pass computing each row's maximum of `QKᵀ` before Phase 1, so
    /// Phase 1 stores `exp(QKᵀ − max)`. Needs `3B² + 2B ≤ M`.
    pub row_max_prepass: bool,
    /// Write each `QKᵀ` entry to memory as soon as it is complete.
    pub write_qk: bool,
}

pub fn tiling_block_size(m: usize) -> usize {
    ((m / 4) as f64).sqrt().floor() as usize
}

pub fn square_tiling_attention(h: &mut MemoryHierarchy, inst: &AttentionInstance) -> Result<KernelResult, KernelError> {
    square_tiling_attention_with(h, inst, TilingOptions::default())
}

fn zeros(h: &mut MemoryHierarchy, count: usize) -> Result<Vec<Slot>, KernelError> {
    (0..count).map(|_| Ok(h.constant(Word::Float(0.0))?)).collect()
}

/// Accumulates the `(i, j)` block of `QKᵀ` into `acc` (row-major over the
/// block) by streaming `Q` and `Kᵀ` blocks along the shared dimension.
fn accumulate_scores(
    h: &mut MemoryHierarchy,
    layout: &Layout,
    b: usize,
    d: usize,
    rows: &std::ops::Range<usize>,
    cols: &std::ops::Range<usize>,
    acc: &[Slot],
) -> Result<(), KernelError> {
    let width = cols.len();
    for l in 0..d.div_ceil(b) {
        let inner = block_range(d, b, l);
        let mut qs = Vec::with_capacity(rows.len() * inner.len());
        for r in rows.clone() {
            for c in inner.clone() {
                qs.push(h.read_word(layout.q(r, c))?);
            }
        }
        // (Kᵀ)[l, j] block: row c of Kᵀ is column c of K.
        let mut ks = Vec::with_capacity(inner.len() * width);
        for c in inner.clone() {
            for col in cols.clone() {
                ks.push(h.read_word(layout.k(col, c))?);
            }
        }
        for (ri, _) in rows.clone().enumerate() {
            for ci in 0..width {
                let a = acc[ri * width + ci];
                for li in 0..inner.len() {
                    h.compute_into(a, Op::MulAdd, &[a, qs[ri * inner.len() + li], ks[li * width + ci]])?;
                }
            }
        }
        h.free_all(qs)?;
        h.free_all(ks)?;
    }
    Ok(())
}

pub fn square_tiling_attention_with(
    h: &mut MemoryHierarchy,
    inst: &AttentionInstance,
    opts: TilingOptions,
) -> Result<KernelResult, KernelError> {
    let layout = prepare(h, inst)?;
    let (n, d, m) = (inst.n(), inst.d(), h.capacity());
    let b = tiling_block_size(m);
    if opts.row_max_prepass && 3 * b * b + 2 * b > m {
        return Err(KernelError::Regime { algorithm: Algorithm::Tiling, m, d, required: 3 * b * b + 2 * b });
    }
    let nb = n.div_ceil(b);
    let db = d.div_ceil(b);
    let mut marks = QkMarks::new(n);

    let mut complete_block = |h: &mut MemoryHierarchy,
                              rows: &std::ops::Range<usize>,
                              cols: &std::ops::Range<usize>,
                              acc: &[Slot]|
     -> Result<(), KernelError> {
        let position = h.trace().len();
        for (ri, r) in rows.clone().enumerate() {
            for (ci, c) in cols.clone().enumerate() {
                marks.mark(r, c, position);
                if opts.write_qk {
                    h.write_word(acc[ri * cols.len() + ci], layout.qk(r, c))?;
                }
            }
        }
        Ok(())
    };

    if opts.row_max_prepass {
        for i in 0..nb {
            let rows = block_range(n, b, i);
            let maxes: Vec<Slot> =
                rows.clone().map(|_| h.constant(Word::Float(f64::NEG_INFINITY))).collect::<Result<_, _>>()?;
            for j in 0..nb {
                let cols = block_range(n, b, j);
                let acc = zeros(h, rows.len() * cols.len())?;
                accumulate_scores(h, &layout, b, d, &rows, &cols, &acc)?;
                complete_block(h, &rows, &cols, &acc)?;
                for (ri, &mx) in maxes.iter().enumerate() {
                    for ci in 0..cols.len() {
                        h.compute_into(mx, Op::Max, &[mx, acc[ri * cols.len() + ci]])?;
                    }
                }
                h.free_all(acc)?;
            }
            for (r, &mx) in rows.clone().zip(&maxes) {
                h.write_word(mx, layout.row_max(r))?;
            }
            h.free_all(maxes)?;
        }
    }

    // Phase 1: A and the row sums.
    for i in 0..nb {
        let rows = block_range(n, b, i);
        let sums = zeros(h, rows.len())?;
        let maxes: Vec<Slot> = if opts.row_max_prepass {
            rows.clone().map(|r| h.read_word(layout.row_max(r))).collect::<Result<_, _>>()?
        } else {
            Vec::new()
        };
        for j in 0..nb {
            let cols = block_range(n, b, j);
            let width = cols.len();
            let acc = zeros(h, rows.len() * width)?;
            accumulate_scores(h, &layout, b, d, &rows, &cols, &acc)?;
            complete_block(h, &rows, &cols, &acc)?;
            for (ri, r) in rows.clone().enumerate() {
                for (ci, c) in cols.clone().enumerate() {
                    let a = acc[ri * width + ci];
                    if let Some(&mx) = maxes.get(ri) {
                        h.compute_into(a, Op::Sub, &[a, mx])?;
                    }
                    h.compute_into(a, Op::Exp, &[a])?;
                    h.write_word(a, layout.a(r, c))?;
                }
            }
            for (ri, &s) in sums.iter().enumerate() {
                for ci in 0..width {
                    h.compute_into(s, Op::Add, &[s, acc[ri * width + ci]])?;
                }
            }
            h.free_all(acc)?;
        }
        for (r, &s) in rows.clone().zip(&sums) {
            h.write_word(s, layout.row_sum(r))?;
        }
        h.free_all(sums)?;
        h.free_all(maxes)?;
    }

    // Phase 2: O = D⁻¹ A V.
    for i in 0..nb {
        let rows = block_range(n, b, i);
        let inv: Vec<Slot> = rows.clone().map(|r| h.read_word(layout.row_sum(r))).collect::<Result<_, _>>()?;
        for &s in &inv {
            h.compute_into(s, Op::Recip, &[s])?;
        }
        for j in 0..db {
            let cols = block_range(d, b, j);
            let width = cols.len();
            let out = zeros(h, rows.len() * width)?;
            for k in 0..nb {
                let inner = block_range(n, b, k);
                let mut a_block = Vec::with_capacity(rows.len() * inner.len());
                for r in rows.clone() {
                    for c in inner.clone() {
                        a_block.push(h.read_word(layout.a(r, c))?);
                    }
                }
                let mut v_block = Vec::with_capacity(inner.len() * width);
                for r in inner.clone() {
                    for c in cols.clone() {
                        v_block.push(h.read_word(layout.v(r, c))?);
                    }
                }
                for ri in 0..rows.len() {
                    for ci in 0..width {
                        let o = out[ri * width + ci];
                        for ki in 0..inner.len() {
                            h.compute_into(
                                o,
                                Op::MulAddScaled,
                                &[o, a_block[ri * inner.len() + ki], v_block[ki * width + ci], inv[ri]],
                            )?;
                        }
                    }
                }
                h.free_all(a_block)?;
                h.free_all(v_block)?;
            }
            // O goes to slow memory, not to cache.
            for (ri, r) in rows.clone().enumerate() {
                for (ci, c) in cols.clone().enumerate() {
                    h.write_word(out[ri * width + ci], layout.o(r, c))?;
                }
            }
            h.free_all(out)?;
        }
        h.free_all(inv)?;
    }

    finish(h, Algorithm::Tiling, &layout, inst, marks)
}
