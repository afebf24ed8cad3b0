//! Two-level memory hierarchy with exact I/O accounting.
//!
//! The cache holds at most `M` words and is the only place arithmetic may
//! happen. Slow memory is an unbounded address → word store. Every transfer
//! between the two levels is one I/O event; moving a word from memory into a
//! cache slot is a read, copying a slot back to memory is a write. Freeing a
//! slot and computing into a slot cost nothing.
//!
//! Kernels manage slots explicitly; there is no eviction policy.

use std::collections::HashMap;
use std::fmt;
use std::io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fields::is_prime;

/// Smallest cache that still admits a 1×1 tiling block.
pub const MIN_CACHE_WORDS: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("cache capacity must be at least {MIN_CACHE_WORDS} words, got {0}")]
    Config(usize),
    #[error("field modulus {0} is not prime")]
    NotPrime(u64),
    #[error("cache full: all {capacity} slots occupied")]
    Capacity { capacity: usize },
    #[error("address {0} was never written")]
    Address(Addr),
    #[error("slot {0} is empty")]
    EmptySlot(Slot),
    #[error("operand slot {0} is not resident in cache")]
    NotResident(Slot),
    #[error("operation {op:?} expects {expected} operands, got {got}")]
    Arity { op: Op, expected: usize, got: usize },
    #[error("mixing words of different kinds")]
    KindMismatch,
    #[error("mixing field moduli {0} and {1}")]
    ModulusMismatch(u64, u64),
    #[error("operation {0:?} is undefined over a finite field")]
    FieldDomain(Op),
    #[error("division by zero in field F_{0}")]
    DivisionByZero(u64),
}

/// Address in slow memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Addr(pub u64);

impl fmt::Display for Addr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Handle to an occupied cache slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Slot(usize);

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Which kind of value a simulation runs over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ValueKind {
    Float,
    /// Prime field `F_q`.
    Field(u64),
}

/// One matrix entry; the unit of I/O.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Word {
    Float(f64),
    Field { value: u64, modulus: u64 },
}

impl Word {
    pub fn field(value: u64, modulus: u64) -> Self {
        Word::Field { value: value % modulus, modulus }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Word::Float(x) => Some(x),
            Word::Field { .. } => None,
        }
    }

    pub fn kind(&self) -> ValueKind {
        match *self {
            Word::Float(_) => ValueKind::Float,
            Word::Field { modulus, .. } => ValueKind::Field(modulus),
        }
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Word::Float(x) => write!(f, "{x}"),
            Word::Field { value, modulus } => write!(f, "{value} (mod {modulus})"),
        }
    }
}

/// Arithmetic primitives available inside the cache.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Copy,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Recip,
    /// Float only.
    Max,
    /// Float only.
    Exp,
    /// `a + b * c`
    MulAdd,
    /// `a + b * c * s`
    MulAddScaled,
}

impl Op {
    pub fn arity(self) -> usize {
        match self {
            Op::Copy | Op::Neg | Op::Recip | Op::Exp => 1,
            Op::Add | Op::Sub | Op::Mul | Op::Div | Op::Max => 2,
            Op::MulAdd => 3,
            Op::MulAddScaled => 4,
        }
    }
}

fn mod_pow(mut base: u64, mut exp: u64, modulus: u64) -> u64 {
    let mut acc = 1u64 % modulus;
    base %= modulus;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, modulus);
        }
        base = mul_mod(base, base, modulus);
        exp >>= 1;
    }
    acc
}

fn mul_mod(a: u64, b: u64, q: u64) -> u64 {
    ((a as u128 * b as u128) % q as u128) as u64
}

fn apply_float(op: Op, x: &[f64]) -> f64 {
    match op {
        Op::Copy => x[0],
        Op::Add => x[0] + x[1],
        Op::Sub => x[0] - x[1],
        Op::Mul => x[0] * x[1],
        Op::Div => x[0] / x[1],
        Op::Neg => -x[0],
        Op::Recip => 1.0 / x[0],
        Op::Max => x[0].max(x[1]),
        Op::Exp => x[0].exp(),
        Op::MulAdd => x[0] + x[1] * x[2],
        Op::MulAddScaled => x[0] + x[1] * x[2] * x[3],
    }
}

fn apply_field(op: Op, x: &[u64], q: u64) -> Result<u64, SimError> {
    let inv = |a: u64| {
        if a == 0 {
            Err(SimError::DivisionByZero(q))
        } else {
            Ok(mod_pow(a, q - 2, q))
        }
    };
    Ok(match op {
        Op::Copy => x[0],
        Op::Add => (x[0] + x[1]) % q,
        Op::Sub => (x[0] + q - x[1]) % q,
        Op::Mul => mul_mod(x[0], x[1], q),
        Op::Div => mul_mod(x[0], inv(x[1])?, q),
        Op::Neg => (q - x[0]) % q,
        Op::Recip => inv(x[0])?,
        Op::MulAdd => (x[0] + mul_mod(x[1], x[2], q)) % q,
        Op::MulAddScaled => (x[0] + mul_mod(mul_mod(x[1], x[2], q), x[3], q)) % q,
        Op::Max | Op::Exp => return Err(SimError::FieldDomain(op)),
    })
}

/// Evaluates `op` on words of a single kind.
pub fn apply(op: Op, operands: &[Word]) -> Result<Word, SimError> {
    if operands.len() != op.arity() {
        return Err(SimError::Arity { op, expected: op.arity(), got: operands.len() });
    }
    match operands[0] {
        Word::Float(_) => {
            let mut xs = [0.0f64; 4];
            for (dst, w) in xs.iter_mut().zip(operands) {
                *dst = w.as_f64().ok_or(SimError::KindMismatch)?;
            }
            Ok(Word::Float(apply_float(op, &xs[..operands.len()])))
        }
        Word::Field { modulus, .. } => {
            let mut xs = [0u64; 4];
            for (dst, w) in xs.iter_mut().zip(operands) {
                match *w {
                    Word::Field { value, modulus: m } if m == modulus => *dst = value,
                    Word::Field { modulus: m, .. } => return Err(SimError::ModulusMismatch(modulus, m)),
                    Word::Float(_) => return Err(SimError::KindMismatch),
                }
            }
            let value = apply_field(op, &xs[..operands.len()], modulus)?;
            Ok(Word::Field { value, modulus })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IoKind {
    Read,
    Write,
}

impl fmt::Display for IoKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IoKind::Read => "read",
            IoKind::Write => "write",
        })
    }
}

/// One word moved between cache and memory. `tick` is the event's index in
/// the trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IoEvent {
    pub tick: u64,
    pub kind: IoKind,
    pub addr: Addr,
    pub value: Word,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IoStats {
    pub reads: u64,
    pub writes: u64,
}

impl IoStats {
    pub fn total(&self) -> u64 {
        self.reads + self.writes
    }
}

/// Contiguous run of trace events `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Epoch {
    pub start: usize,
    pub end: usize,
}

impl Epoch {
    pub fn io_count(&self) -> usize {
        self.end - self.start
    }
}

/// Greedy left-to-right split into epochs of exactly `m` I/O events, the
/// last one possibly partial. An empty trace yields a single empty epoch.
pub fn split_into_epochs(trace_len: usize, m: usize) -> Vec<Epoch> {
    assert!(m > 0, "epoch size must be positive");
    if trace_len == 0 {
        return vec![Epoch { start: 0, end: 0 }];
    }
    (0..trace_len).step_by(m).map(|start| Epoch { start, end: (start + m).min(trace_len) }).collect()
}

/// Index of the epoch in which a computation happened, given the number of
/// I/O events that preceded it. A computation sitting exactly on a boundary
/// belongs to the following epoch, or to the last one at the end of the trace.
pub fn epoch_of_position(position: usize, m: usize, epoch_count: usize) -> usize {
    (position / m).min(epoch_count.saturating_sub(1))
}

/// Bounded cache over unbounded memory, with a complete I/O trace.
#[derive(Debug, Clone)]
pub struct MemoryHierarchy {
    capacity: usize,
    kind: ValueKind,
    slots: Vec<Option<Word>>,
    free: Vec<usize>,
    occupied: usize,
    peak: usize,
    memory: HashMap<Addr, Word>,
    trace: Vec<IoEvent>,
    stats: IoStats,
    float_overflow: bool,
}

impl MemoryHierarchy {
    pub fn new(capacity: usize, kind: ValueKind) -> Result<Self, SimError> {
        if capacity < MIN_CACHE_WORDS {
            return Err(SimError::Config(capacity));
        }
        if let ValueKind::Field(q) = kind {
            if !is_prime(q) {
                return Err(SimError::NotPrime(q));
            }
        }
        Ok(MemoryHierarchy {
            capacity,
            kind,
            slots: Vec::new(),
            free: Vec::new(),
            occupied: 0,
            peak: 0,
            memory: HashMap::new(),
            trace: Vec::new(),
            stats: IoStats::default(),
            float_overflow: false,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn value_kind(&self) -> ValueKind {
        self.kind
    }

    pub fn occupied(&self) -> usize {
        self.occupied
    }

    /// Highest simultaneous slot occupancy seen so far.
    pub fn peak_occupancy(&self) -> usize {
        self.peak
    }

    pub fn stats(&self) -> IoStats {
        self.stats
    }

    pub fn trace(&self) -> &[IoEvent] {
        &self.trace
    }

    /// Set once any float computation produced a non-finite value.
    pub fn float_overflow(&self) -> bool {
        self.float_overflow
    }

    /// True when nothing has touched the cache or the trace yet.
    pub fn is_pristine(&self) -> bool {
        self.trace.is_empty() && self.occupied == 0
    }

    fn check_kind(&self, word: &Word) -> Result<(), SimError> {
        match (self.kind, word) {
            (ValueKind::Float, Word::Float(_)) => Ok(()),
            (ValueKind::Field(q), Word::Field { modulus, .. }) if q == *modulus => Ok(()),
            (ValueKind::Field(q), Word::Field { modulus, .. }) => Err(SimError::ModulusMismatch(q, *modulus)),
            _ => Err(SimError::KindMismatch),
        }
    }

    /// Places an input word in slow memory without charging I/O.
    pub fn preload(&mut self, addr: Addr, word: Word) -> Result<(), SimError> {
        self.check_kind(&word)?;
        self.memory.insert(addr, word);
        Ok(())
    }

    /// Inspects slow memory without charging I/O.
    pub fn peek(&self, addr: Addr) -> Option<Word> {
        self.memory.get(&addr).copied()
    }

    pub fn memory_snapshot(&self) -> HashMap<Addr, Word> {
        self.memory.clone()
    }

    /// Inspects a cache slot.
    pub fn value(&self, slot: Slot) -> Result<Word, SimError> {
        self.slots.get(slot.0).copied().flatten().ok_or(SimError::NotResident(slot))
    }

    fn allocate(&mut self, word: Word) -> Result<Slot, SimError> {
        let index = match self.free.pop() {
            Some(i) => i,
            None if self.slots.len() < self.capacity => {
                self.slots.push(None);
                self.slots.len() - 1
            }
            None => return Err(SimError::Capacity { capacity: self.capacity }),
        };
        self.slots[index] = Some(word);
        self.occupied += 1;
        self.peak = self.peak.max(self.occupied);
        debug_assert!(self.occupied <= self.capacity);
        Ok(Slot(index))
    }

    fn push_event(&mut self, kind: IoKind, addr: Addr, value: Word) {
        let tick = self.trace.len() as u64;
        self.trace.push(IoEvent { tick, kind, addr, value });
        match kind {
            IoKind::Read => self.stats.reads += 1,
            IoKind::Write => self.stats.writes += 1,
        }
    }

    /// Copies `addr` into a fresh cache slot (one read).
    pub fn read_word(&mut self, addr: Addr) -> Result<Slot, SimError> {
        let word = *self.memory.get(&addr).ok_or(SimError::Address(addr))?;
        let slot = self.allocate(word)?;
        self.push_event(IoKind::Read, addr, word);
        Ok(slot)
    }

    /// Copies a slot to `addr` (one write). The slot stays resident.
    pub fn write_word(&mut self, slot: Slot, addr: Addr) -> Result<(), SimError> {
        let word = self.value(slot).map_err(|_| SimError::EmptySlot(slot))?;
        self.memory.insert(addr, word);
        self.push_event(IoKind::Write, addr, word);
        Ok(())
    }

    pub fn free_slot(&mut self, slot: Slot) -> Result<(), SimError> {
        match self.slots.get_mut(slot.0) {
            Some(entry @ Some(_)) => {
                *entry = None;
                self.free.push(slot.0);
                self.occupied -= 1;
                Ok(())
            }
            _ => Err(SimError::EmptySlot(slot)),
        }
    }

    pub fn free_all(&mut self, slots: impl IntoIterator<Item = Slot>) -> Result<(), SimError> {
        slots.into_iter().try_for_each(|s| self.free_slot(s))
    }

    /// Materialises a constant in a fresh slot. No I/O.
    pub fn constant(&mut self, word: Word) -> Result<Slot, SimError> {
        self.check_kind(&word)?;
        self.allocate(word)
    }

    fn evaluate(&mut self, op: Op, operands: &[Slot]) -> Result<Word, SimError> {
        let mut words = [Word::Float(0.0); 4];
        if operands.len() > words.len() {
            return Err(SimError::Arity { op, expected: op.arity(), got: operands.len() });
        }
        for (dst, &slot) in words.iter_mut().zip(operands) {
            *dst = self.value(slot)?;
        }
        let result = apply(op, &words[..operands.len()])?;
        if let Word::Float(x) = result {
            if !x.is_finite() {
                self.float_overflow = true;
            }
        }
        Ok(result)
    }

    /// Computes `op(operands)` into a fresh slot.
    pub fn compute(&mut self, op: Op, operands: &[Slot]) -> Result<Slot, SimError> {
        let word = self.evaluate(op, operands)?;
        self.allocate(word)
    }

    /// Computes `op(operands)` and overwrites `target`, which must be
    /// resident and may appear among the operands.
    pub fn compute_into(&mut self, target: Slot, op: Op, operands: &[Slot]) -> Result<(), SimError> {
        self.value(target)?;
        let word = self.evaluate(op, operands)?;
        self.slots[target.0] = Some(word);
        Ok(())
    }

    /// Writes the trace as CSV with columns `tick,kind,address`.
    pub fn write_trace_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        write_trace_csv(&self.trace, out)
    }
}

pub fn write_trace_csv<W: io::Write>(trace: &[IoEvent], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["tick", "kind", "address"])?;
    for e in trace {
        w.write_record([e.tick.to_string(), e.kind.to_string(), e.addr.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Error raised by [`replay_trace`] when the trace disagrees with memory.
#[derive(Debug, Error, PartialEq)]
#[error("trace event {tick} read {addr} = {seen}, memory held {expected:?}")]
pub struct ReplayMismatch {
    pub tick: u64,
    pub addr: Addr,
    pub seen: Word,
    pub expected: Option<Word>,
}

/// Replays writes against `initial` memory, checking that every read observes
/// the value memory held at that point. Returns the final memory.
pub fn replay_trace(initial: &HashMap<Addr, Word>, trace: &[IoEvent]) -> Result<HashMap<Addr, Word>, ReplayMismatch> {
    let mut memory = initial.clone();
    for e in trace {
        match e.kind {
            IoKind::Read => {
                let held = memory.get(&e.addr).copied();
                if held != Some(e.value) {
                    return Err(ReplayMismatch { tick: e.tick, addr: e.addr, seen: e.value, expected: held });
                }
            }
            IoKind::Write => {
                memory.insert(e.addr, e.value);
            }
        }
    }
    Ok(memory)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn float_h(m: usize) -> MemoryHierarchy {
        MemoryHierarchy::new(m, ValueKind::Float).unwrap()
    }

    #[test]
    fn create_checks_capacity_and_modulus() {
        let h = float_h(100);
        assert_eq!(h.capacity(), 100);
        assert_eq!(h.occupied(), 0);
        assert_eq!(h.stats(), IoStats::default());
        assert_eq!(MemoryHierarchy::new(3, ValueKind::Float).unwrap_err(), SimError::Config(3));
        let f = MemoryHierarchy::new(16, ValueKind::Field(17)).unwrap();
        assert_eq!(f.value_kind(), ValueKind::Field(17));
        assert_eq!(MemoryHierarchy::new(16, ValueKind::Field(15)).unwrap_err(), SimError::NotPrime(15));
    }

    #[test]
    fn read_after_write_round_trips() {
        let mut h = float_h(4);
        let s = h.constant(Word::Float(3.5)).unwrap();
        h.write_word(s, Addr(7)).unwrap();
        h.free_slot(s).unwrap();
        let r = h.read_word(Addr(7)).unwrap();
        assert_eq!(h.value(r).unwrap(), Word::Float(3.5));
        assert_eq!(h.stats(), IoStats { reads: 1, writes: 1 });
    }

    #[test]
    fn capacity_is_enforced() {
        let mut h = float_h(4);
        h.preload(Addr(0), Word::Float(1.0)).unwrap();
        for _ in 0..4 {
            h.read_word(Addr(0)).unwrap();
        }
        assert_eq!(h.read_word(Addr(0)).unwrap_err(), SimError::Capacity { capacity: 4 });
        assert_eq!(h.stats().reads, 4);
    }

    #[test]
    fn uninitialised_address_is_rejected() {
        let mut h = float_h(4);
        assert_eq!(h.read_word(Addr(9)).unwrap_err(), SimError::Address(Addr(9)));
    }

    #[test]
    fn last_write_wins_and_survives_eviction() {
        let mut h = float_h(4);
        let a = h.constant(Word::Float(1.0)).unwrap();
        let b = h.constant(Word::Float(2.0)).unwrap();
        h.write_word(a, Addr(0)).unwrap();
        h.write_word(b, Addr(0)).unwrap();
        h.free_all([a, b]).unwrap();
        let r = h.read_word(Addr(0)).unwrap();
        assert_eq!(h.value(r).unwrap(), Word::Float(2.0));
    }

    #[test]
    fn writing_empty_slot_fails() {
        let mut h = float_h(4);
        let s = h.constant(Word::Float(0.0)).unwrap();
        h.free_slot(s).unwrap();
        assert_eq!(h.write_word(s, Addr(0)).unwrap_err(), SimError::EmptySlot(s));
    }

    #[test]
    fn free_semantics() {
        let mut h = float_h(4);
        h.preload(Addr(0), Word::Float(1.0)).unwrap();
        let slots: Vec<_> = (0..4).map(|_| h.read_word(Addr(0)).unwrap()).collect();
        let before = h.stats();
        h.free_slot(slots[2]).unwrap();
        assert_eq!(h.stats(), before);
        assert!(h.read_word(Addr(0)).is_ok());
        h.free_slot(slots[0]).unwrap();
        assert_eq!(h.free_slot(slots[0]).unwrap_err(), SimError::EmptySlot(slots[0]));
    }

    #[test]
    fn compute_is_free_and_cache_only() {
        let mut h = float_h(4);
        let a = h.constant(Word::Float(2.0)).unwrap();
        let b = h.constant(Word::Float(3.0)).unwrap();
        let c = h.compute(Op::Add, &[a, b]).unwrap();
        assert_eq!(h.value(c).unwrap(), Word::Float(5.0));
        let z = h.constant(Word::Float(0.0)).unwrap();
        h.compute_into(z, Op::Exp, &[z]).unwrap();
        assert_eq!(h.value(z).unwrap(), Word::Float(1.0));
        assert_eq!(h.stats(), IoStats::default());
        h.free_slot(a).unwrap();
        assert_eq!(h.compute(Op::Add, &[a, b]).unwrap_err(), SimError::NotResident(a));
    }

    #[test]
    fn field_arithmetic() {
        let mut h = MemoryHierarchy::new(16, ValueKind::Field(17)).unwrap();
        let a = h.constant(Word::field(5, 17)).unwrap();
        let b = h.constant(Word::field(7, 17)).unwrap();
        let c = h.compute(Op::Mul, &[a, b]).unwrap();
        assert_eq!(h.value(c).unwrap(), Word::field(1, 17));
        let inv = h.compute(Op::Recip, &[a]).unwrap();
        let one = h.compute(Op::Mul, &[a, inv]).unwrap();
        assert_eq!(h.value(one).unwrap(), Word::field(1, 17));
        assert_eq!(h.compute(Op::Exp, &[a]).unwrap_err(), SimError::FieldDomain(Op::Exp));
        assert_eq!(h.constant(Word::field(1, 19)).unwrap_err(), SimError::ModulusMismatch(17, 19));
        assert_eq!(h.constant(Word::Float(1.0)).unwrap_err(), SimError::KindMismatch);
    }

    #[test]
    fn mixed_moduli_rejected() {
        let err = apply(Op::Add, &[Word::field(1, 17), Word::field(1, 19)]).unwrap_err();
        assert_eq!(err, SimError::ModulusMismatch(17, 19));
    }

    #[test]
    fn float_overflow_sets_flag() {
        let mut h = float_h(4);
        let big = h.constant(Word::Float(1000.0)).unwrap();
        assert!(!h.float_overflow());
        h.compute_into(big, Op::Exp, &[big]).unwrap();
        assert!(h.float_overflow());
    }

    #[test]
    fn epochs_greedy_split() {
        let sizes: Vec<_> = split_into_epochs(10, 4).iter().map(Epoch::io_count).collect();
        assert_eq!(sizes, vec![4, 4, 2]);
        assert!(sizes.iter().sum::<usize>() >= (sizes.len() - 1) * 4);
        assert_eq!(split_into_epochs(0, 4), vec![Epoch { start: 0, end: 0 }]);
        assert_eq!(split_into_epochs(8, 4).len(), 2);
    }

    #[test]
    fn boundary_computations_go_to_next_epoch() {
        assert_eq!(epoch_of_position(0, 4, 3), 0);
        assert_eq!(epoch_of_position(3, 4, 3), 0);
        assert_eq!(epoch_of_position(4, 4, 3), 1);
        assert_eq!(epoch_of_position(12, 4, 3), 2);
    }

    #[test]
    fn trace_csv_format() {
        let mut h = float_h(4);
        h.preload(Addr(3), Word::Float(1.0)).unwrap();
        let s = h.read_word(Addr(3)).unwrap();
        h.write_word(s, Addr(5)).unwrap();
        let mut buf = Vec::new();
        h.write_trace_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "tick,kind,address\n0,read,3\n1,write,5\n");
    }

    #[test]
    fn replay_detects_tampering() {
        let mut h = float_h(4);
        h.preload(Addr(0), Word::Float(1.0)).unwrap();
        let initial = h.memory_snapshot();
        let s = h.read_word(Addr(0)).unwrap();
        h.compute_into(s, Op::Add, &[s, s]).unwrap();
        h.write_word(s, Addr(0)).unwrap();
        let _ = h.read_word(Addr(0)).unwrap();
        assert_eq!(replay_trace(&initial, h.trace()).unwrap(), h.memory_snapshot());
        let mut bad = h.trace().to_vec();
        bad[2].value = Word::Float(9.0);
        assert!(replay_trace(&initial, &bad).is_err());
    }
}
