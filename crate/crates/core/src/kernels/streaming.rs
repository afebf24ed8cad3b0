//! FlashAttention-style kernel: a block of `R` query rows stays resident
//! while `K` and `V` stream past one row at a time. Each query row keeps a
//! running maximum, a running sum of shifted exponentials and an output
//! accumulator, rescaled whenever the maximum grows. Neither `QKᵀ` nor `A`
//! ever reaches slow memory.

use super::{finish, prepare, Algorithm, AttentionInstance, KernelError, KernelResult, QkMarks};
use crate::memory::{MemoryHierarchy, Op, Slot, Word};

/// Peak cache use with `r` resident query rows: `Q` block and accumulators
/// (`2rd`), sums, maxima and per-row scores (`3r`), one streamed `K` or `V`
/// row (`d`), two temporaries.
pub fn streaming_cache_budget(r: usize, d: usize) -> usize {
    2 * r * d + 3 * r + d + 2
}

/// Query rows per block: `⌊M/(4d)⌋`, lowered until the budget fits. `None`
/// when `M < 8d`.
pub fn streaming_block_rows(m: usize, d: usize) -> Option<usize> {
    if m < 8 * d {
        return None;
    }
    let mut r = m / (4 * d);
    while r > 1 && streaming_cache_budget(r, d) > m {
        r -= 1;
    }
    (streaming_cache_budget(r, d) <= m).then_some(r)
}

pub fn streaming_attention(h: &mut MemoryHierarchy, inst: &AttentionInstance) -> Result<KernelResult, KernelError> {
    let (n, d, m) = (inst.n(), inst.d(), h.capacity());
    let rows_per_block = streaming_block_rows(m, d).ok_or(KernelError::Regime {
        algorithm: Algorithm::Streaming,
        m,
        d,
        required: 8 * d,
    })?;
    let layout = prepare(h, inst)?;
    let mut marks = QkMarks::new(n);

    for start in (0..n).step_by(rows_per_block) {
        let rows: Vec<usize> = (start..(start + rows_per_block).min(n)).collect();
        let mut q = Vec::with_capacity(rows.len() * d);
        for &r in &rows {
            for c in 0..d {
                q.push(h.read_word(layout.q(r, c))?);
            }
        }
        let zero = Word::Float(0.0);
        let out: Vec<Slot> = (0..rows.len() * d).map(|_| h.constant(zero)).collect::<Result<_, _>>()?;
        let sums: Vec<Slot> = rows.iter().map(|_| h.constant(zero)).collect::<Result<_, _>>()?;
        let mut maxes: Vec<Slot> = Vec::with_capacity(rows.len());

        for j in 0..n {
            let k_row: Vec<Slot> = (0..d).map(|c| h.read_word(layout.k(j, c))).collect::<Result<_, _>>()?;
            let mut scores = Vec::with_capacity(rows.len());
            for (ri, &r) in rows.iter().enumerate() {
                let s = h.compute(Op::Mul, &[q[ri * d], k_row[0]])?;
                for c in 1..d {
                    h.compute_into(s, Op::MulAdd, &[s, q[ri * d + c], k_row[c]])?;
                }
                marks.mark(r, j, h.trace().len());
                scores.push(s);
            }
            h.free_all(k_row)?;

            // scores[ri] becomes exp(s − running max).
            for (ri, &s) in scores.iter().enumerate() {
                if j == 0 {
                    let mx = h.compute(Op::Copy, &[s])?;
                    h.compute_into(s, Op::Sub, &[s, mx])?;
                    maxes.push(mx);
                } else {
                    let mx = maxes[ri];
                    let t = h.compute(Op::Max, &[mx, s])?;
                    let scale = h.compute(Op::Sub, &[mx, t])?;
                    h.compute_into(scale, Op::Exp, &[scale])?;
                    h.compute_into(sums[ri], Op::Mul, &[sums[ri], scale])?;
                    for c in 0..d {
                        let o = out[ri * d + c];
                        h.compute_into(o, Op::Mul, &[o, scale])?;
                    }
                    h.compute_into(s, Op::Sub, &[s, t])?;
                    h.free_slot(scale)?;
                    h.free_slot(mx)?;
                    maxes[ri] = t;
                }
                h.compute_into(s, Op::Exp, &[s])?;
                h.compute_into(sums[ri], Op::Add, &[sums[ri], s])?;
            }

            let v_row: Vec<Slot> = (0..d).map(|c| h.read_word(layout.v(j, c))).collect::<Result<_, _>>()?;
            for (ri, &p) in scores.iter().enumerate() {
                for c in 0..d {
                    let o = out[ri * d + c];
                    h.compute_into(o, Op::MulAdd, &[o, p, v_row[c]])?;
                }
            }
            h.free_all(scores)?;
            h.free_all(v_row)?;
        }

        for (ri, &r) in rows.iter().enumerate() {
            let l = sums[ri];
            h.compute_into(l, Op::Recip, &[l])?;
            for c in 0..d {
                let o = out[ri * d + c];
                h.compute_into(o, Op::Mul, &[o, l])?;
                h.write_word(o, layout.o(r, c))?;
            }
        }
        h.free_all(q)?;
        h.free_all(out)?;
        h.free_all(sums)?;
        h.free_all(maxes)?;
    }

    finish(h, Algorithm::Streaming, &layout, inst, marks)
}

#[cfg(test)]
mod tests {
    use super::super::reference_attention;
    use super::*;
    use crate::dense::DenseMatrix;
    use crate::memory::ValueKind;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn expected_io(n: usize, d: usize, m: usize) -> u64 {
        let r = streaming_block_rows(m, d).unwrap();
        (2 * n * d + 2 * n * d * n.div_ceil(r)) as u64
    }

    #[test]
    fn block_rows() {
        assert_eq!(streaming_block_rows(64, 2), Some(8));
        assert_eq!(streaming_block_rows(16, 2), Some(1));
        assert_eq!(streaming_block_rows(8, 1), Some(1));
        assert_eq!(streaming_block_rows(64, 8), Some(2));
        assert_eq!(streaming_block_rows(31, 4), None);
        for d in 1..12 {
            for m in 8 * d..8 * d + 200 {
                let r = streaming_block_rows(m, d).unwrap();
                assert!(r >= 1 && r <= m / (4 * d));
                assert!(streaming_cache_budget(r, d) <= m);
            }
        }
    }

    #[test]
    fn matches_reference_and_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for &(n, d, m) in &[(8, 2, 64), (5, 3, 24), (9, 4, 100), (1, 1, 16), (13, 2, 40)] {
            let inst = AttentionInstance::random(n, d, 1.0, &mut rng);
            let mut h = MemoryHierarchy::new(m, ValueKind::Float).unwrap();
            let res = streaming_attention(&mut h, &inst).unwrap();
            assert!(res.output.relative_error(&reference_attention(&inst)) < 1e-9, "N={n} d={d} M={m}");
            assert_eq!(res.io.total(), expected_io(n, d, m));
            assert!(res.peak_cache <= streaming_cache_budget(streaming_block_rows(m, d).unwrap(), d));
        }
    }

    #[test]
    fn rejects_small_cache() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let inst = AttentionInstance::random(4, 4, 1.0, &mut rng);
        let mut h = MemoryHierarchy::new(16, ValueKind::Float).unwrap();
        let err = streaming_attention(&mut h, &inst).unwrap_err();
        assert!(matches!(err, KernelError::Regime { required: 32, .. }));
    }

    #[test]
    fn stable_for_large_logits() {
        let q = DenseMatrix::from_rows(&[vec![40.0], vec![-40.0]]).unwrap();
        let k = DenseMatrix::from_rows(&[vec![-30.0], vec![30.0]]).unwrap();
        let v = DenseMatrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        let inst = AttentionInstance::new(q, k, v).unwrap();
        let mut h = MemoryHierarchy::new(16, ValueKind::Float).unwrap();
        let res = streaming_attention(&mut h, &inst).unwrap();
        assert!(!h.float_overflow());
        assert!(res.output.relative_error(&reference_attention(&inst)) < 1e-12);
    }

    #[test]
    fn never_writes_intermediates() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let inst = AttentionInstance::random(6, 2, 1.0, &mut rng);
        let mut h = MemoryHierarchy::new(32, ValueKind::Float).unwrap();
        let res = streaming_attention(&mut h, &inst).unwrap();
        assert_eq!(res.io.writes, 12);
        assert!(h
            .trace()
            .iter()
            .filter(|e| e.kind == crate::memory::IoKind::Write)
            .all(|e| (36..48).contains(&e.addr.0)));
    }
}
