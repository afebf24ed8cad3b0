//! Matrix-entry compression over `F_q`: Alice holds `Q` and `K`, Bob must
//! recover the entries of `QKᵀ` indexed by `I`. The counting oracle measures
//! how many distinct answers Bob could need to tell apart, which bounds any
//! one-way message from below; the direct protocol gives the matching
//! upper bound.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::Read;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fields::{FieldError, FieldMatrix};

/// Default ceiling on the number of `Q` assignments the oracle enumerates.
pub const DEFAULT_ENUMERATION_CAP: u128 = 10_000_000;

#[derive(Debug, Error)]
pub enum CompressionError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("index ({0}, {1}) outside the {2}x{2} matrix")]
    IndexOutOfRange(usize, usize, usize),
    #[error("K must be {n}x{d}, got {rows}x{cols}")]
    Shape { n: usize, d: usize, rows: usize, cols: usize },
    #[error("enumeration needs {required} assignments, cap is {cap}")]
    EnumerationCap { required: u128, cap: u128 },
    #[error("index file: {0}")]
    Parse(String),
}

/// Entries of an `N×N` matrix, as 0-based `(row, col)` pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexSet {
    entries: BTreeSet<(usize, usize)>,
}

impl IndexSet {
    pub fn new(entries: impl IntoIterator<Item = (usize, usize)>) -> Self {
        IndexSet { entries: entries.into_iter().collect() }
    }

    /// All of column `col` over the given rows.
    pub fn column(col: usize, rows: impl IntoIterator<Item = usize>) -> Self {
        IndexSet::new(rows.into_iter().map(|r| (r, col)))
    }

    /// The full `rows × cols` block.
    pub fn block(rows: impl IntoIterator<Item = usize>, cols: impl IntoIterator<Item = usize> + Clone) -> Self {
        IndexSet::new(rows.into_iter().flat_map(|r| cols.clone().into_iter().map(move |c| (r, c))))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.entries.iter().copied()
    }

    /// `R_I`, the distinct rows.
    pub fn rows(&self) -> BTreeSet<usize> {
        self.entries.iter().map(|&(r, _)| r).collect()
    }

    /// `C_I`, the distinct columns.
    pub fn cols(&self) -> BTreeSet<usize> {
        self.entries.iter().map(|&(_, c)| c).collect()
    }

    /// `R_i` for each row `i`: the columns selected in that row.
    pub fn row_sets(&self) -> BTreeMap<usize, BTreeSet<usize>> {
        let mut m: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
        for &(r, c) in &self.entries {
            m.entry(r).or_default().insert(c);
        }
        m
    }

    /// `C_j` for each column `j`: the rows selected in that column.
    pub fn col_sets(&self) -> BTreeMap<usize, BTreeSet<usize>> {
        let mut m: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
        for &(r, c) in &self.entries {
            m.entry(c).or_default().insert(r);
        }
        m
    }

    fn check(&self, n: usize) -> Result<(), CompressionError> {
        match self.entries.iter().find(|&&(r, c)| r >= n || c >= n) {
            Some(&(r, c)) => Err(CompressionError::IndexOutOfRange(r, c, n)),
            None => Ok(()),
        }
    }

    /// Reads `row,col` lines (0-based, no header).
    pub fn read_csv<R: Read>(input: R) -> Result<Self, CompressionError> {
        let mut rd = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(input);
        let mut entries = BTreeSet::new();
        for rec in rd.records() {
            let rec = rec.map_err(|e| CompressionError::Parse(e.to_string()))?;
            if rec.len() != 2 {
                return Err(CompressionError::Parse(format!("expected row,col, got {} fields", rec.len())));
            }
            let parse = |s: &str| s.parse::<usize>().map_err(|e| CompressionError::Parse(format!("{s:?}: {e}")));
            entries.insert((parse(&rec[0])?, parse(&rec[1])?));
        }
        Ok(IndexSet { entries })
    }
}

/// Which rows of `Q` range over all of `F_q^d`; the rest are fixed to zero.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub enum RowRestriction {
    /// Exactly the rows `R_I` that the index set touches.
    #[default]
    IndexRows,
    Rows(BTreeSet<usize>),
}

fn checked_pow(base: u64, exp: usize) -> Option<u128> {
    let mut acc: u128 = 1;
    for _ in 0..exp {
        acc = acc.checked_mul(base as u128)?;
    }
    Some(acc)
}

/// Number of distinct tuples `((QKᵀ)[i, j])_{(i,j) ∈ I}` as the free rows of
/// `Q` range over `F_q^d`, with `K` fixed. Fixing the other rows to zero can
/// only shrink the count, so the result is a valid lower bound for the
/// unrestricted problem.
pub fn distinct_output_count(
    k: &FieldMatrix,
    indices: &IndexSet,
    n: usize,
    d: usize,
    restriction: &RowRestriction,
    cap: u128,
) -> Result<u64, CompressionError> {
    if (k.rows(), k.cols()) != (n, d) {
        return Err(CompressionError::Shape { n, d, rows: k.rows(), cols: k.cols() });
    }
    indices.check(n)?;
    let free: Vec<usize> = match restriction {
        RowRestriction::IndexRows => indices.rows().into_iter().collect(),
        RowRestriction::Rows(rows) => {
            if let Some(&r) = rows.iter().find(|&&r| r >= n) {
                return Err(CompressionError::IndexOutOfRange(r, 0, n));
            }
            rows.iter().copied().collect()
        }
    };
    let q = k.modulus();
    let digits = free.len() * d;
    let total = checked_pow(q, digits)
        .filter(|&t| t <= cap)
        .ok_or(CompressionError::EnumerationCap { required: checked_pow(q, digits).unwrap_or(u128::MAX), cap })?;
    let f = k.field();
    // Position of each index row among the free rows; fixed rows give zeros.
    let slot: Vec<(Option<usize>, usize)> =
        indices.iter().map(|(r, c)| (free.iter().position(|&x| x == r), c)).collect();

    let evaluate = |code: u64, out: &mut Vec<u64>, q_rows: &mut Vec<u64>| {
        let mut x = code;
        for v in q_rows.iter_mut() {
            *v = x % q;
            x /= q;
        }
        out.clear();
        for &(pos, c) in &slot {
            let value = match pos {
                Some(p) => (0..d).fold(0, |acc, l| f.add(acc, f.mul(q_rows[p * d + l], k.get(c, l)))),
                None => 0,
            };
            out.push(value);
        }
    };

    let total = total as u64;
    let chunk = (total / 64).max(1 << 12);
    let seen = (0..total.div_ceil(chunk))
        .into_par_iter()
        .map(|b| {
            let mut local = HashSet::new();
            let mut out = Vec::with_capacity(slot.len());
            let mut q_rows = vec![0u64; digits];
            for code in b * chunk..((b + 1) * chunk).min(total) {
                evaluate(code, &mut out, &mut q_rows);
                if !local.contains(&out) {
                    local.insert(out.clone());
                }
            }
            local
        })
        .reduce(HashSet::new, |mut a, b| {
            if a.len() < b.len() {
                return b.into_iter().chain(a).collect();
            }
            a.extend(b);
            a
        });
    Ok(seen.len() as u64)
}

/// Fewest `q`-ary symbols that can distinguish `count` messages:
/// `⌈log_q count⌉`, and 0 for `count ≤ 1`.
pub fn cc_lower_bound_symbols(count: u64, q: u64) -> u32 {
    assert!(q >= 2, "alphabet must have at least two symbols");
    let mut k = 0u32;
    let mut reach: u128 = 1;
    while reach < count as u128 {
        reach *= q as u128;
        k += 1;
    }
    k
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Send the `|I|` requested entries.
    Entries,
    /// Send rows `R_I` of `Q` and rows `C_I` of `K`; Bob multiplies.
    Factors,
}

/// Message produced by the direct protocol.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompressionMessage {
    pub strategy: Strategy,
    pub symbols: Vec<u64>,
    pub q: u64,
}

impl CompressionMessage {
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Length in bits at `⌈log₂ q⌉` bits per symbol.
    pub fn bit_length(&self) -> u64 {
        let bits = 64 - (self.q - 1).leading_zeros() as u64;
        self.symbols.len() as u64 * bits
    }
}

/// Alice's side: the shorter of sending the entries (`|I|` symbols) or the
/// relevant factor rows (`d(|R_I| + |C_I|)` symbols). Ties go to factors.
pub fn direct_compression_protocol(
    q: &FieldMatrix,
    k: &FieldMatrix,
    indices: &IndexSet,
) -> Result<CompressionMessage, CompressionError> {
    let (n, d) = (q.rows(), q.cols());
    if (k.rows(), k.cols()) != (n, d) || k.modulus() != q.modulus() {
        return Err(CompressionError::Shape { n, d, rows: k.rows(), cols: k.cols() });
    }
    indices.check(n)?;
    let rows = indices.rows();
    let cols = indices.cols();
    let factor_len = d * (rows.len() + cols.len());
    let f = q.field();
    let (strategy, symbols) = if factor_len <= indices.len() {
        let mut s = Vec::with_capacity(factor_len);
        for &r in &rows {
            s.extend_from_slice(q.row(r));
        }
        for &c in &cols {
            s.extend_from_slice(k.row(c));
        }
        (Strategy::Factors, s)
    } else {
        let entries =
            indices.iter().map(|(r, c)| (0..d).fold(0, |acc, l| f.add(acc, f.mul(q.get(r, l), k.get(c, l))))).collect();
        (Strategy::Entries, entries)
    };
    Ok(CompressionMessage { strategy, symbols, q: q.modulus() })
}

/// Bob's side: recovers every entry of `I` from the message, knowing `I`
/// and `d`.
pub fn decode_message(msg: &CompressionMessage, indices: &IndexSet, d: usize) -> Vec<((usize, usize), u64)> {
    match msg.strategy {
        Strategy::Entries => indices.iter().zip(msg.symbols.iter().copied()).collect(),
        Strategy::Factors => {
            let q = msg.q;
            let rows: Vec<usize> = indices.rows().into_iter().collect();
            let cols: Vec<usize> = indices.cols().into_iter().collect();
            let q_row = |r: usize| {
                let p = rows.binary_search(&r).expect("row in R_I");
                &msg.symbols[p * d..(p + 1) * d]
            };
            let k_row = |c: usize| {
                let p = cols.binary_search(&c).expect("col in C_I");
                let base = rows.len() * d + p * d;
                &msg.symbols[base..base + d]
            };
            indices
                .iter()
                .map(|(r, c)| {
                    let v = q_row(r)
                        .iter()
                        .zip(k_row(c))
                        .fold(0u128, |acc, (&a, &b)| (acc + a as u128 * b as u128) % q as u128);
                    ((r, c), v as u64)
                })
                .collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldMode {
    LargeField,
    Binary,
}

/// Cap on the `QKᵀ` entries an epoch can make progress on, constant 1 on
/// each term: `max(⌈M²/d²⌉, M)` for large fields and
/// `max(⌈M²⌈log₂N⌉²/d²⌉, M)` over `F_2`.
pub fn epoch_progress_bound(m: u64, d: u64, mode: FieldMode, n: u64) -> u64 {
    assert!(m >= 1 && d >= 1 && n >= 1, "M, d and N must be positive");
    let numerator = match mode {
        FieldMode::LargeField => m * m,
        FieldMode::Binary => {
            let log_n = 64 - (n - 1).leading_zeros() as u64;
            m * m * log_n * log_n
        }
    };
    numerator.div_ceil(d * d).max(m)
}
