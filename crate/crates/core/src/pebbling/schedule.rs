//! Pebbling counterpart of the streaming kernel.
//!
//! For each block of `R` query rows: read the block's `Q` entries once, then
//! for every key `j` read row `j` of `K`, build the `R` summation trees of
//! `(QKᵀ)[i, j]`, exponentiate, read row `j` of `V`, and fold the new
//! products into the running `AV` and row-sum trees. A tree node is computed
//! as soon as both of its children are available, after which the children
//! are dropped. At the end of the block the outputs are scaled and written.
//!
//! Balanced row-sum and `AV` trees leave up to `⌈log₂ N⌉ + 1` partial sums
//! pending per tree. When the red budget runs out, the oldest pending
//! partial (the largest, merged last) is written to memory and read back
//! when its sibling arrives; each such spill costs two I/O.

use std::collections::VecDeque;

use super::game::{Board, Calculation, Color, Rule, Transition};
use super::{AttentionDag, NodeId, NodeKind, PebbleError};

#[derive(Debug, Clone)]
pub struct Schedule {
    pub calculation: Calculation,
    pub rows_per_block: usize,
    pub peak_red: usize,
    /// Partial sums written out and read back to stay within the budget.
    pub spills: usize,
}

impl Schedule {
    /// `2Nd + 2Nd·⌈N/R⌉ + 2·spills`.
    pub fn io(&self, n: usize, d: usize) -> usize {
        2 * n * d + 2 * n * d * n.div_ceil(self.rows_per_block) + 2 * self.spills
    }
}

/// Raised when the red budget cannot be met even after spilling.
struct OutOfRed;

struct Recorder<'a> {
    adag: &'a AttentionDag,
    board: Board,
    calc: Calculation,
    peak: usize,
    budget: usize,
    /// Red partial sums and roots waiting for a sibling, oldest first.
    pending: VecDeque<NodeId>,
    spilled: Vec<bool>,
    spills: usize,
}

impl<'a> Recorder<'a> {
    fn push(&mut self, t: Transition) {
        self.board
            .apply(self.adag.dag(), usize::MAX, t)
            .unwrap_or_else(|r| panic!("schedule emitted an illegal step {t:?}: {r}"));
        self.peak = self.peak.max(self.board.red_count);
        self.calc.push(t);
    }

    /// Spills pending partials until one more red pebble fits.
    fn make_room(&mut self) -> Result<(), OutOfRed> {
        while self.board.red_count >= self.budget {
            let v = self.pending.pop_front().ok_or(OutOfRed)?;
            self.push(Transition::new(Rule::R2, v));
            self.push(Transition::delete(v, Color::Red));
            self.spilled[v] = true;
            self.spills += 1;
        }
        Ok(())
    }

    fn read(&mut self, v: NodeId) -> Result<(), OutOfRed> {
        self.make_room()?;
        self.push(Transition::new(Rule::R1, v));
        Ok(())
    }

    fn compute(&mut self, v: NodeId) -> Result<(), OutOfRed> {
        self.make_room()?;
        self.push(Transition::new(Rule::R3, v));
        Ok(())
    }

    fn drop_red(&mut self, v: NodeId) {
        self.push(Transition::delete(v, Color::Red));
    }

    fn available(&self, v: NodeId) -> bool {
        self.board.red[v] || self.spilled[v]
    }

    /// Takes `v` out of the pending queue and makes sure it is red.
    fn claim(&mut self, v: NodeId) -> Result<(), OutOfRed> {
        if let Some(pos) = self.pending.iter().position(|&x| x == v) {
            self.pending.remove(pos);
        }
        if self.spilled[v] {
            self.read(v)?;
            self.push(Transition::delete(v, Color::Blue));
            self.spilled[v] = false;
        }
        Ok(())
    }

    /// The vertex that `v` feeds within its own summation tree.
    fn fold_parent(&self, v: NodeId) -> Option<NodeId> {
        let g = self.adag.dag();
        let targets: &[NodeKind] = match g.kind(v) {
            NodeKind::L1Product | NodeKind::SumInternal => &[NodeKind::SumInternal, NodeKind::QKtRoot],
            NodeKind::Exp | NodeKind::RowSumInternal => &[NodeKind::RowSumInternal, NodeKind::RowSumRoot],
            NodeKind::L2Product | NodeKind::AVSumInternal => &[NodeKind::AVSumInternal, NodeKind::AVRoot],
            _ => return None,
        };
        g.children(v).iter().copied().find(|&c| targets.contains(&g.kind(c)))
    }

    /// Merges upward from the red vertex `v` while every parent of the next
    /// tree vertex is available, dropping merged children. A vertex that
    /// cannot merge yet joins the pending queue. `QKᵀ` roots stay red for
    /// the exponentiation that follows; row-sum and `AV` roots are queued.
    fn absorb(&mut self, mut v: NodeId) -> Result<(), OutOfRed> {
        let g = self.adag.dag();
        if !self.board.red[v] {
            // Already merged by a sibling.
            return Ok(());
        }
        loop {
            let Some(p) = self.fold_parent(v) else {
                if g.kind(v) != NodeKind::QKtRoot {
                    self.pending.push_back(v);
                }
                return Ok(());
            };
            if !g.parents(p).iter().all(|&x| self.available(x)) {
                self.pending.push_back(v);
                return Ok(());
            }
            for &x in g.parents(p) {
                if let Some(pos) = self.pending.iter().position(|&y| y == x) {
                    self.pending.remove(pos);
                }
            }
            for &x in g.parents(p) {
                self.claim(x)?;
            }
            self.compute(p)?;
            for &x in g.parents(p) {
                self.drop_red(x);
            }
            v = p;
        }
    }
}

fn build(adag: &AttentionDag, rows_per_block: usize, budget: usize) -> Result<Schedule, OutOfRed> {
    let (n, d) = (adag.n(), adag.d());
    let g = adag.dag();
    let mut rec = Recorder {
        adag,
        board: Board::initial(g),
        calc: Vec::new(),
        peak: 0,
        budget,
        pending: VecDeque::new(),
        spilled: vec![false; g.len()],
        spills: 0,
    };

    for start in (0..n).step_by(rows_per_block) {
        let rows: Vec<usize> = (start..(start + rows_per_block).min(n)).collect();
        for &i in &rows {
            for l in 0..d {
                rec.read(adag.q(i, l))?;
            }
        }
        for j in 0..n {
            for l in 0..d {
                rec.read(adag.k(j, l))?;
            }
            for &i in &rows {
                for &leaf in &adag.qk_tree(i, j).leaves {
                    rec.compute(leaf)?;
                }
            }
            for l in 0..d {
                rec.drop_red(adag.k(j, l));
            }
            for &i in &rows {
                for l in 0..d {
                    rec.absorb(adag.qk_tree(i, j).leaves[l])?;
                }
                let root = adag.qk_tree(i, j).root;
                rec.compute(adag.exp(i, j))?;
                rec.drop_red(root);
            }
            for c in 0..d {
                rec.read(adag.v(j, c))?;
            }
            for &i in &rows {
                for c in 0..d {
                    let p = adag.l2(i, j, c);
                    rec.compute(p)?;
                    rec.absorb(p)?;
                }
            }
            for c in 0..d {
                rec.drop_red(adag.v(j, c));
            }
            for &i in &rows {
                rec.absorb(adag.exp(i, j))?;
            }
        }
        for &i in &rows {
            let sum_root = adag.row_sum_tree(i).root;
            rec.claim(sum_root)?;
            rec.compute(adag.inverse(i))?;
            rec.drop_red(sum_root);
            for c in 0..d {
                let root = adag.av_tree(i, c).root;
                rec.claim(root)?;
                let out = adag.output(i, c);
                rec.compute(out)?;
                rec.drop_red(root);
                rec.push(Transition::new(Rule::R2, out));
                rec.drop_red(out);
            }
            rec.drop_red(adag.inverse(i));
            for l in 0..d {
                rec.drop_red(adag.q(i, l));
            }
        }
    }
    for &v in g.inputs() {
        rec.push(Transition::delete(v, Color::Blue));
    }
    Ok(Schedule { calculation: rec.calc, rows_per_block, peak_red: rec.peak, spills: rec.spills })
}

/// Red pebbles the schedule needs with `rows_per_block` resident rows and
/// no spilling.
pub fn schedule_peak(adag: &AttentionDag, rows_per_block: usize) -> usize {
    build(adag, rows_per_block, usize::MAX).map(|s| s.peak_red).unwrap_or(usize::MAX)
}

/// Smallest budget for which a single resident row works with spilling.
/// It does not depend on `N`, and `3d + 3` always suffices: the `Q` row,
/// the `K` row and the `d` products of one `QKᵀ` entry are live at once.
pub fn schedule_min_budget(adag: &AttentionDag) -> usize {
    let (mut lo, mut hi) = (1, schedule_peak(adag, 1));
    while lo < hi {
        let mid = (lo + hi) / 2;
        if build(adag, 1, mid).is_ok() {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    hi
}

/// Complete calculation mirroring the streaming kernel with at most `m`
/// red pebbles, using the row block size with the least I/O (larger blocks
/// on ties).
pub fn blocked_pebbling_schedule(adag: &AttentionDag, m: usize) -> Result<Schedule, PebbleError> {
    let (n, d) = (adag.n(), adag.d());
    let upper = (m / d).clamp(1, n);
    let mut best: Option<Schedule> = None;
    // Without spills the I/O only grows as blocks shrink, so the first
    // spill-free block size ends the search.
    for r in (1..=upper).rev() {
        let Ok(s) = build(adag, r, m) else { continue };
        let done = s.spills == 0;
        if best.as_ref().is_none_or(|b| s.io(n, d) < b.io(n, d)) {
            best = Some(s);
        }
        if done {
            break;
        }
    }
    best.ok_or_else(|| PebbleError::Regime { m, required: schedule_min_budget(adag) })
}

#[cfg(test)]
mod tests {
    use super::super::{build_attention_dag, validate_calculation};
    use super::*;

    #[test]
    fn n1_d1_costs_four() {
        let a = build_attention_dag(1, 1).unwrap();
        let s = blocked_pebbling_schedule(&a, 8).unwrap();
        let io = validate_calculation(a.dag(), 8, &s.calculation).unwrap();
        assert_eq!(io.reads, 3);
        assert_eq!(io.writes, 1);
    }

    #[test]
    fn io_matches_closed_form() {
        for &(n, d, m) in &[(4, 2, 32), (8, 2, 16), (5, 3, 40), (8, 4, 64), (3, 1, 12), (8, 2, 8), (16, 4, 12)] {
            let a = build_attention_dag(n, d).unwrap();
            let s = blocked_pebbling_schedule(&a, m).unwrap();
            let io = validate_calculation(a.dag(), m, &s.calculation).unwrap();
            assert!(s.peak_red <= m);
            let expected = 2 * n * d + 2 * n * d * n.div_ceil(s.rows_per_block) + 2 * s.spills;
            assert_eq!(io.total() as usize, expected, "N={n} d={d} M={m}");
        }
    }

    #[test]
    fn spilling_lowers_the_threshold_to_linear_in_d() {
        for n in [2, 5, 16] {
            for d in 1..=4 {
                let a = build_attention_dag(n, d).unwrap();
                let min = schedule_min_budget(&a);
                assert!(min <= 3 * d + 3, "N={n} d={d} min={min}");
                let s = blocked_pebbling_schedule(&a, min).unwrap();
                assert!(validate_calculation(a.dag(), min, &s.calculation).is_ok());
                assert!(blocked_pebbling_schedule(&a, min - 1).is_err());
            }
        }
        let a = build_attention_dag(8, 2).unwrap();
        assert!(blocked_pebbling_schedule(&a, 8).unwrap().spills > 0);
    }

    #[test]
    fn bigger_cache_means_bigger_blocks() {
        let a = build_attention_dag(8, 2).unwrap();
        let small = blocked_pebbling_schedule(&a, 24).unwrap();
        let large = blocked_pebbling_schedule(&a, 48).unwrap();
        assert!(large.rows_per_block > small.rows_per_block);
    }

    #[test]
    fn too_small_cache_is_a_regime_error() {
        let a = build_attention_dag(4, 4).unwrap();
        assert!(matches!(blocked_pebbling_schedule(&a, 8), Err(PebbleError::Regime { m: 8, required: 12 })));
    }
}
