use std::collections::{HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Dag, NodeId, PebbleError};
use crate::memory::IoStats;

/// Largest DAG [`brute_force_min_io`] will search.
pub const BRUTE_FORCE_NODE_CAP: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Rule {
    /// Red onto a blue vertex (a read).
    R1,
    /// Blue onto a red vertex (a write).
    R2,
    /// Red onto a vertex whose parents are all red.
    R3,
    /// Remove a pebble.
    R4,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Red,
    Blue,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub rule: Rule,
    pub vertex: NodeId,
    /// Which pebble an `R4` removes. When absent, red goes first.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color: Option<Color>,
}

impl Transition {
    pub fn new(rule: Rule, vertex: NodeId) -> Self {
        Transition { rule, vertex, color: None }
    }

    pub fn delete(vertex: NodeId, color: Color) -> Self {
        Transition { rule: Rule::R4, vertex, color: Some(color) }
    }
}

pub type Calculation = Vec<Transition>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ViolationReason {
    UnknownVertex,
    NoBluePebble,
    NoRedPebble,
    AlreadyRed,
    AlreadyBlue,
    ParentNotRed(NodeId),
    ComputeOnInput,
    RedBudgetExceeded(usize),
    NoPebbleToRemove,
    /// Terminal configuration still has a red pebble here.
    RedAtEnd,
    /// Output vertex without a blue pebble at the end.
    OutputNotBlue,
    /// Non-output vertex with a blue pebble at the end.
    StrayBlue,
}

impl fmt::Display for ViolationReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ViolationReason::UnknownVertex => write!(f, "vertex does not exist"),
            ViolationReason::NoBluePebble => write!(f, "no blue pebble to read"),
            ViolationReason::NoRedPebble => write!(f, "no red pebble to write"),
            ViolationReason::AlreadyRed => write!(f, "vertex already red"),
            ViolationReason::AlreadyBlue => write!(f, "vertex already blue"),
            ViolationReason::ParentNotRed(p) => write!(f, "parent {p} is not red"),
            ViolationReason::ComputeOnInput => write!(f, "inputs cannot be computed"),
            ViolationReason::RedBudgetExceeded(m) => write!(f, "would exceed {m} red pebbles"),
            ViolationReason::NoPebbleToRemove => write!(f, "no such pebble to remove"),
            ViolationReason::RedAtEnd => write!(f, "red pebble left in terminal configuration"),
            ViolationReason::OutputNotBlue => write!(f, "output lacks a blue pebble at the end"),
            ViolationReason::StrayBlue => write!(f, "non-output keeps a blue pebble at the end"),
        }
    }
}

/// First illegal step. `index == calc.len()` with `rule == None` means the
/// final configuration is not terminal.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("transition {index} ({rule:?} on {vertex}): {reason}")]
pub struct Violation {
    pub index: usize,
    pub rule: Option<Rule>,
    pub vertex: NodeId,
    pub reason: ViolationReason,
}

/// Red/blue configuration with a running red count.
#[derive(Debug, Clone)]
pub(crate) struct Board {
    pub red: Vec<bool>,
    pub blue: Vec<bool>,
    pub red_count: usize,
}

impl Board {
    pub fn initial(dag: &Dag) -> Self {
        let mut blue = vec![false; dag.len()];
        for &i in dag.inputs() {
            blue[i] = true;
        }
        Board { red: vec![false; dag.len()], blue, red_count: 0 }
    }

    /// Applies `t` if legal under budget `m`.
    pub fn apply(&mut self, dag: &Dag, m: usize, t: Transition) -> Result<(), ViolationReason> {
        let v = t.vertex;
        if v >= dag.len() {
            return Err(ViolationReason::UnknownVertex);
        }
        match t.rule {
            Rule::R1 | Rule::R3 => {
                if self.red[v] {
                    return Err(ViolationReason::AlreadyRed);
                }
                if t.rule == Rule::R1 && !self.blue[v] {
                    return Err(ViolationReason::NoBluePebble);
                }
                if t.rule == Rule::R3 {
                    if dag.is_input(v) {
                        return Err(ViolationReason::ComputeOnInput);
                    }
                    if let Some(&p) = dag.parents(v).iter().find(|&&p| !self.red[p]) {
                        return Err(ViolationReason::ParentNotRed(p));
                    }
                }
                if self.red_count >= m {
                    return Err(ViolationReason::RedBudgetExceeded(m));
                }
                self.red[v] = true;
                self.red_count += 1;
            }
            Rule::R2 => {
                if !self.red[v] {
                    return Err(ViolationReason::NoRedPebble);
                }
                if self.blue[v] {
                    return Err(ViolationReason::AlreadyBlue);
                }
                self.blue[v] = true;
            }
            Rule::R4 => {
                let color = t.color.unwrap_or(if self.red[v] { Color::Red } else { Color::Blue });
                let slot = match color {
                    Color::Red => &mut self.red[v],
                    Color::Blue => &mut self.blue[v],
                };
                if !*slot {
                    return Err(ViolationReason::NoPebbleToRemove);
                }
                *slot = false;
                if color == Color::Red {
                    self.red_count -= 1;
                }
            }
        }
        Ok(())
    }

    pub fn terminal_violation(&self, dag: &Dag) -> Option<(NodeId, ViolationReason)> {
        if let Some(v) = self.red.iter().position(|&r| r) {
            return Some((v, ViolationReason::RedAtEnd));
        }
        let mut is_output = vec![false; dag.len()];
        for &o in dag.outputs() {
            is_output[o] = true;
            if !self.blue[o] {
                return Some((o, ViolationReason::OutputNotBlue));
            }
        }
        self.blue.iter().zip(&is_output).position(|(&b, &o)| b && !o).map(|v| (v, ViolationReason::StrayBlue))
    }
}

/// Checks that `calc` is a complete calculation on `dag` with at most `m`
/// red pebbles; returns its I/O (`R1` count as reads, `R2` as writes).
pub fn validate_calculation(dag: &Dag, m: usize, calc: &[Transition]) -> Result<IoStats, Violation> {
    let mut board = Board::initial(dag);
    let mut io = IoStats::default();
    for (index, &t) in calc.iter().enumerate() {
        board.apply(dag, m, t).map_err(|reason| Violation { index, rule: Some(t.rule), vertex: t.vertex, reason })?;
        match t.rule {
            Rule::R1 => io.reads += 1,
            Rule::R2 => io.writes += 1,
            _ => {}
        }
    }
    if let Some((vertex, reason)) = board.terminal_violation(dag) {
        return Err(Violation { index: calc.len(), rule: None, vertex, reason });
    }
    Ok(io)
}

/// Exact `Q(G, M)` by 0-1 breadth-first search over `(red, blue)` bitsets,
/// where `R1`/`R2` cost one and `R3`/`R4` are free. `Ok(None)` when no
/// complete calculation exists with `m` red pebbles.
pub fn brute_force_min_io(dag: &Dag, m: usize) -> Result<Option<u64>, PebbleError> {
    let n = dag.len();
    if n > BRUTE_FORCE_NODE_CAP {
        return Err(PebbleError::SearchCap { nodes: n, cap: BRUTE_FORCE_NODE_CAP });
    }
    let parent_mask: Vec<u32> = (0..n).map(|v| dag.parents(v).iter().fold(0u32, |acc, &p| acc | 1 << p)).collect();
    let input_mask = dag.inputs().iter().fold(0u32, |acc, &i| acc | 1 << i);
    let output_mask = dag.outputs().iter().fold(0u32, |acc, &o| acc | 1 << o);
    let pack = |red: u32, blue: u32| (red as u64) | (blue as u64) << n;
    let start = pack(0, input_mask);
    let goal = pack(0, output_mask);

    let mut dist: HashMap<u64, u64> = HashMap::from([(start, 0)]);
    let mut queue = VecDeque::from([(start, 0u64)]);
    while let Some((state, cost)) = queue.pop_front() {
        if dist.get(&state).is_some_and(|&c| c < cost) {
            continue;
        }
        if state == goal {
            return Ok(Some(cost));
        }
        let red = (state & ((1 << n) - 1)) as u32;
        let blue = (state >> n) as u32;
        let reds = red.count_ones() as usize;
        let mut relax = |next: u64, step: u64, queue: &mut VecDeque<(u64, u64)>| {
            let c = cost + step;
            if dist.get(&next).is_none_or(|&old| c < old) {
                dist.insert(next, c);
                if step == 0 {
                    queue.push_front((next, c));
                } else {
                    queue.push_back((next, c));
                }
            }
        };
        for v in 0..n {
            let bit = 1u32 << v;
            if red & bit == 0 && reds < m {
                if blue & bit != 0 {
                    relax(pack(red | bit, blue), 1, &mut queue);
                }
                if input_mask & bit == 0 && parent_mask[v] & !red == 0 {
                    relax(pack(red | bit, blue), 0, &mut queue);
                }
            }
            if red & bit != 0 {
                if blue & bit == 0 {
                    relax(pack(red, blue | bit), 1, &mut queue);
                }
                relax(pack(red & !bit, blue), 0, &mut queue);
            }
            if blue & bit != 0 {
                relax(pack(red, blue & !bit), 0, &mut queue);
            }
        }
    }
    Ok(None)
}
