//! Attention kernels executed against the memory simulator.
//!
//! Inputs are preloaded into slow memory at fixed addresses (see [`Layout`])
//! and every kernel leaves its output `O` there. Each kernel records, for
//! every entry of `QKᵀ`, how many I/O events preceded its first complete
//! computation, so runs can be bucketed into epochs afterwards.

mod streaming;
mod tiling;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dense::{DenseMatrix, MatrixError};
use crate::memory::{epoch_of_position, split_into_epochs, Addr, IoStats, MemoryHierarchy, SimError, ValueKind, Word};

pub use streaming::{streaming_attention, streaming_block_rows, streaming_cache_budget};
pub use tiling::{square_tiling_attention, square_tiling_attention_with, tiling_block_size, TilingOptions};

#[derive(Debug, Error)]
pub enum KernelError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("instance: {0}")]
    Shape(String),
    #[error("{algorithm} needs M >= {required} for d = {d}, got M = {m}")]
    Regime { algorithm: Algorithm, m: usize, d: usize, required: usize },
    #[error("kernels need a fresh float-mode hierarchy")]
    Hierarchy,
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Tiling,
    Streaming,
    Dispatch,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Tiling => "tiling",
            Algorithm::Streaming => "streaming",
            Algorithm::Dispatch => "dispatch",
        })
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tiling" => Ok(Algorithm::Tiling),
            "streaming" => Ok(Algorithm::Streaming),
            "dispatch" => Ok(Algorithm::Dispatch),
            other => Err(format!("unknown algorithm {other:?} (tiling, streaming, dispatch)")),
        }
    }
}

/// `Q, K, V ∈ R^{N×d}`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionInstance {
    pub q: DenseMatrix,
    pub k: DenseMatrix,
    pub v: DenseMatrix,
}

impl AttentionInstance {
    pub fn new(q: DenseMatrix, k: DenseMatrix, v: DenseMatrix) -> Result<Self, KernelError> {
        let shape = (q.rows(), q.cols());
        if shape.0 == 0 || shape.1 == 0 {
            return Err(KernelError::Shape("N and d must be positive".into()));
        }
        for (name, m) in [("K", &k), ("V", &v)] {
            if (m.rows(), m.cols()) != shape {
                return Err(KernelError::Shape(format!(
                    "{name} is {}x{}, Q is {}x{}",
                    m.rows(),
                    m.cols(),
                    shape.0,
                    shape.1
                )));
            }
        }
        Ok(AttentionInstance { q, k, v })
    }

    /// Entries uniform in `[-bound, bound]`, drawn Q then K then V.
    pub fn random<R: Rng + ?Sized>(n: usize, d: usize, bound: f64, rng: &mut R) -> Self {
        let q = DenseMatrix::random_uniform(n, d, bound, rng);
        let k = DenseMatrix::random_uniform(n, d, bound, rng);
        let v = DenseMatrix::random_uniform(n, d, bound, rng);
        AttentionInstance { q, k, v }
    }

    pub fn n(&self) -> usize {
        self.q.rows()
    }

    pub fn d(&self) -> usize {
        self.q.cols()
    }
}

/// Slow-memory addresses used by every kernel, all row-major:
/// `Q` at 0, `K` at `Nd`, `V` at `2Nd`, `O` at `3Nd`, then the `N×N` matrix
/// `A`, the row sums, the row maxima, and the `N×N` write-through region for
/// `QKᵀ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    n: u64,
    d: u64,
}

impl Layout {
    pub fn new(n: usize, d: usize) -> Self {
        Layout { n: n as u64, d: d as u64 }
    }

    fn nd(&self) -> u64 {
        self.n * self.d
    }

    pub fn q(&self, r: usize, c: usize) -> Addr {
        Addr(r as u64 * self.d + c as u64)
    }

    pub fn k(&self, r: usize, c: usize) -> Addr {
        Addr(self.nd() + r as u64 * self.d + c as u64)
    }

    pub fn v(&self, r: usize, c: usize) -> Addr {
        Addr(2 * self.nd() + r as u64 * self.d + c as u64)
    }

    pub fn o(&self, r: usize, c: usize) -> Addr {
        Addr(3 * self.nd() + r as u64 * self.d + c as u64)
    }

    pub fn a(&self, r: usize, c: usize) -> Addr {
        Addr(4 * self.nd() + r as u64 * self.n + c as u64)
    }

    pub fn row_sum(&self, r: usize) -> Addr {
        Addr(4 * self.nd() + self.n * self.n + r as u64)
    }

    pub fn row_max(&self, r: usize) -> Addr {
        Addr(4 * self.nd() + self.n * self.n + self.n + r as u64)
    }

    pub fn qk(&self, r: usize, c: usize) -> Addr {
        Addr(4 * self.nd() + self.n * self.n + 2 * self.n + r as u64 * self.n + c as u64)
    }
}

/// Trace position of the first complete computation of each `QKᵀ` entry.
#[derive(Debug, Clone)]
pub(crate) struct QkMarks {
    n: usize,
    first: Vec<Option<usize>>,
}

impl QkMarks {
    pub(crate) fn new(n: usize) -> Self {
        QkMarks { n, first: vec![None; n * n] }
    }

    pub(crate) fn mark(&mut self, r: usize, c: usize, position: usize) {
        let e = &mut self.first[r * self.n + c];
        if e.is_none() {
            *e = Some(position);
        }
    }

    fn into_positions(self) -> Vec<usize> {
        self.first.into_iter().map(|p| p.expect("every QKᵀ entry is computed")).collect()
    }
}

/// Epoch view of a run: the trace split into blocks of `M` I/O
/// events and the number of `QKᵀ` entries first computed in each.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochSummary {
    pub epochs: usize,
    pub b_max: usize,
    pub per_epoch: Vec<usize>,
}

impl EpochSummary {
    pub fn from_positions(trace_len: usize, m: usize, positions: &[usize]) -> Self {
        let epochs = split_into_epochs(trace_len, m).len();
        let mut per_epoch = vec![0usize; epochs];
        for &p in positions {
            per_epoch[epoch_of_position(p, m, epochs)] += 1;
        }
        let b_max = per_epoch.iter().copied().max().unwrap_or(0);
        EpochSummary { epochs, b_max, per_epoch }
    }
}

#[derive(Debug, Clone)]
pub struct KernelResult {
    pub algorithm: Algorithm,
    pub output: DenseMatrix,
    pub io: IoStats,
    pub epochs: EpochSummary,
    /// For entry `(i, j)` at index `i*N + j`: I/O events preceding its first
    /// complete computation.
    pub qk_first_computed: Vec<usize>,
    pub peak_cache: usize,
}

pub(crate) fn prepare(h: &mut MemoryHierarchy, inst: &AttentionInstance) -> Result<Layout, KernelError> {
    if h.value_kind() != ValueKind::Float || !h.is_pristine() {
        return Err(KernelError::Hierarchy);
    }
    let layout = Layout::new(inst.n(), inst.d());
    for r in 0..inst.n() {
        for c in 0..inst.d() {
            h.preload(layout.q(r, c), Word::Float(inst.q.get(r, c)))?;
            h.preload(layout.k(r, c), Word::Float(inst.k.get(r, c)))?;
            h.preload(layout.v(r, c), Word::Float(inst.v.get(r, c)))?;
        }
    }
    Ok(layout)
}

pub(crate) fn finish(
    h: &MemoryHierarchy,
    algorithm: Algorithm,
    layout: &Layout,
    inst: &AttentionInstance,
    marks: QkMarks,
) -> Result<KernelResult, KernelError> {
    debug_assert_eq!(h.occupied(), 0, "kernel leaked cache slots");
    let mut output = DenseMatrix::zeros(inst.n(), inst.d());
    for r in 0..inst.n() {
        for c in 0..inst.d() {
            let w = h.peek(layout.o(r, c)).ok_or(SimError::Address(layout.o(r, c)))?;
            output.set(r, c, w.as_f64().ok_or(SimError::KindMismatch)?);
        }
    }
    let positions = marks.into_positions();
    Ok(KernelResult {
        algorithm,
        output,
        io: h.stats(),
        epochs: EpochSummary::from_positions(h.trace().len(), h.capacity(), &positions),
        qk_first_computed: positions,
        peak_cache: h.peak_occupancy(),
    })
}

/// `D⁻¹ exp(QKᵀ) V` in plain `f64`, with each row shifted by its maximum
/// before exponentiation. No I/O accounting.
pub fn reference_attention(inst: &AttentionInstance) -> DenseMatrix {
    let (n, d) = (inst.n(), inst.d());
    let mut out = DenseMatrix::zeros(n, d);
    let mut scores = vec![0.0; n];
    for i in 0..n {
        for (j, s) in scores.iter_mut().enumerate() {
            *s = inst.q.row(i).iter().zip(inst.k.row(j)).map(|(a, b)| a * b).sum();
        }
        let mx = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for s in scores.iter_mut() {
            *s = (*s - mx).exp();
            total += *s;
        }
        for c in 0..d {
            let acc: f64 = scores.iter().enumerate().map(|(j, p)| p * inst.v.get(j, c)).sum();
            out.set(i, c, acc / total);
        }
    }
    out
}

/// Kernel chosen by [`dispatch_attention`]: streaming when `M ≥ d²` and the
/// streaming kernel fits (`M ≥ 8d`), tiling otherwise. For `d < 8` the band
/// `d² ≤ M < 8d` therefore goes to tiling.
pub fn select_algorithm(d: usize, m: usize) -> Algorithm {
    if m >= d * d && m >= 8 * d {
        Algorithm::Streaming
    } else {
        Algorithm::Tiling
    }
}

pub fn dispatch_attention(h: &mut MemoryHierarchy, inst: &AttentionInstance) -> Result<KernelResult, KernelError> {
    match select_algorithm(inst.d(), h.capacity()) {
        Algorithm::Streaming => streaming_attention(h, inst),
        _ => square_tiling_attention(h, inst),
    }
}

/// Runs `algorithm` on a fresh float hierarchy of `m` words.
pub fn run_kernel(
    algorithm: Algorithm,
    m: usize,
    inst: &AttentionInstance,
) -> Result<(KernelResult, MemoryHierarchy), KernelError> {
    let mut h = MemoryHierarchy::new(m, ValueKind::Float)?;
    let result = match algorithm {
        Algorithm::Tiling => square_tiling_attention(&mut h, inst)?,
        Algorithm::Streaming => streaming_attention(&mut h, inst)?,
        Algorithm::Dispatch => dispatch_attention(&mut h, inst)?,
    };
    Ok((result, h))
}

/// `QKᵀ` computed by the tiling kernel on `V = 1`, with every entry written
/// to memory the moment it is first complete. Returns the product and the
/// instrumented run.
pub fn matmul_via_attention(
    h: &mut MemoryHierarchy,
    q: &DenseMatrix,
    k: &DenseMatrix,
) -> Result<(DenseMatrix, KernelResult), KernelError> {
    let v = DenseMatrix::filled(q.rows(), q.cols(), 1.0);
    let inst = AttentionInstance::new(q.clone(), k.clone(), v)?;
    let result = square_tiling_attention_with(h, &inst, TilingOptions { write_qk: true, ..Default::default() })?;
    let layout = Layout::new(inst.n(), inst.d());
    let n = inst.n();
    let mut product = DenseMatrix::zeros(n, n);
    for r in 0..n {
        for c in 0..n {
            let w = h.peek(layout.qk(r, c)).ok_or(SimError::Address(layout.qk(r, c)))?;
            product.set(r, c, w.as_f64().ok_or(SimError::KindMismatch)?);
        }
    }
    Ok((product, result))
}
