use std::fmt;
use std::io;

use super::{FieldError, PrimeField};

/// Default ceiling on the number of row subsets [`all_k_subsets_independent`]
/// will enumerate.
pub const DEFAULT_SUBSET_CAP: u128 = 1_000_000;

/// Dense matrix over a prime field, entries stored row-major in `[0, q)`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct FieldMatrix {
    rows: usize,
    cols: usize,
    field: PrimeField,
    data: Vec<u64>,
}

impl fmt::Debug for FieldMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "FieldMatrix {}x{} over F_{}", self.rows, self.cols, self.field.modulus())?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        Ok(())
    }
}

impl FieldMatrix {
    pub fn zeros(rows: usize, cols: usize, q: u64) -> Result<Self, FieldError> {
        let field = PrimeField::new(q)?;
        Ok(FieldMatrix { rows, cols, field, data: vec![0; rows * cols] })
    }

    pub fn from_rows(q: u64, rows: &[Vec<u64>]) -> Result<Self, FieldError> {
        let field = PrimeField::new(q)?;
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(FieldError::Dimension("ragged rows".into()));
        }
        let data = rows.iter().flatten().map(|&x| field.reduce(x)).collect();
        Ok(FieldMatrix { rows: rows.len(), cols, field, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn modulus(&self) -> u64 {
        self.field.modulus()
    }

    pub fn field(&self) -> PrimeField {
        self.field
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> u64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, value: u64) {
        self.data[r * self.cols + c] = self.field.reduce(value);
    }

    pub fn row(&self, r: usize) -> &[u64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> FieldMatrix {
        let mut t = FieldMatrix { rows: self.cols, cols: self.rows, field: self.field, data: vec![0; self.data.len()] };
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.get(r, c);
            }
        }
        t
    }

    pub fn select_rows(&self, rows: &[usize]) -> FieldMatrix {
        let data = rows.iter().flat_map(|&r| self.row(r).iter().copied()).collect();
        FieldMatrix { rows: rows.len(), cols: self.cols, field: self.field, data }
    }

    pub fn select_cols(&self, cols: &[usize]) -> FieldMatrix {
        let mut data = Vec::with_capacity(self.rows * cols.len());
        for r in 0..self.rows {
            data.extend(cols.iter().map(|&c| self.get(r, c)));
        }
        FieldMatrix { rows: self.rows, cols: cols.len(), field: self.field, data }
    }

    /// Stacks `other` below `self`.
    pub fn vstack(&self, other: &FieldMatrix) -> Result<FieldMatrix, FieldError> {
        if self.cols != other.cols || self.field != other.field {
            return Err(FieldError::Dimension("vstack needs equal width and field".into()));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(FieldMatrix { rows: self.rows + other.rows, cols: self.cols, field: self.field, data })
    }

    pub fn matmul(&self, other: &FieldMatrix) -> Result<FieldMatrix, FieldError> {
        if self.cols != other.rows || self.field != other.field {
            return Err(FieldError::Dimension(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let f = self.field;
        let mut out =
            FieldMatrix { rows: self.rows, cols: other.cols, field: f, data: vec![0; self.rows * other.cols] };
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0 {
                    continue;
                }
                for j in 0..other.cols {
                    let idx = i * other.cols + j;
                    out.data[idx] = f.add(out.data[idx], f.mul(a, other.get(k, j)));
                }
            }
        }
        Ok(out)
    }

    /// Reduces in place to reduced row echelon form; returns pivot columns.
    fn rref_in_place(&mut self) -> Vec<usize> {
        let f = self.field;
        let mut pivots = Vec::new();
        let mut row = 0;
        for col in 0..self.cols {
            if row == self.rows {
                break;
            }
            let Some(p) = (row..self.rows).find(|&r| self.get(r, col) != 0) else {
                continue;
            };
            if p != row {
                for c in 0..self.cols {
                    self.data.swap(p * self.cols + c, row * self.cols + c);
                }
            }
            let inv = f.inv(self.get(row, col)).expect("pivot is nonzero");
            for c in col..self.cols {
                let v = f.mul(self.get(row, c), inv);
                self.data[row * self.cols + c] = v;
            }
            for r in 0..self.rows {
                if r == row {
                    continue;
                }
                let factor = self.get(r, col);
                if factor == 0 {
                    continue;
                }
                for c in col..self.cols {
                    let v = f.sub(self.get(r, c), f.mul(factor, self.get(row, c)));
                    self.data[r * self.cols + c] = v;
                }
            }
            pivots.push(col);
            row += 1;
        }
        pivots
    }

    pub fn rref(&self) -> (FieldMatrix, Vec<usize>) {
        let mut m = self.clone();
        let pivots = m.rref_in_place();
        (m, pivots)
    }

    /// Rank by exact Gaussian elimination.
    pub fn rank(&self) -> usize {
        self.rref().1.len()
    }

    /// Determinant of a square matrix by elimination.
    pub fn determinant(&self) -> Result<u64, FieldError> {
        if self.rows != self.cols {
            return Err(FieldError::Dimension("determinant of a non-square matrix".into()));
        }
        let f = self.field;
        let n = self.rows;
        let mut m = self.data.clone();
        let mut det = 1 % f.modulus();
        for col in 0..n {
            let Some(p) = (col..n).find(|&r| m[r * n + col] != 0) else {
                return Ok(0);
            };
            if p != col {
                for c in 0..n {
                    m.swap(p * n + c, col * n + c);
                }
                det = f.neg(det);
            }
            let pivot = m[col * n + col];
            det = f.mul(det, pivot);
            let inv = f.inv(pivot).expect("pivot is nonzero");
            for r in col + 1..n {
                let factor = f.mul(m[r * n + col], inv);
                if factor == 0 {
                    continue;
                }
                for c in col..n {
                    m[r * n + c] = f.sub(m[r * n + c], f.mul(factor, m[col * n + c]));
                }
            }
        }
        Ok(det)
    }

    /// Basis of `{x : self · x = 0}`, one vector per free column.
    pub fn null_space_basis(&self) -> Vec<Vec<u64>> {
        let (r, pivots) = self.rref();
        let f = self.field;
        let free: Vec<usize> = (0..self.cols).filter(|c| !pivots.contains(c)).collect();
        free.iter()
            .map(|&fc| {
                let mut x = vec![0u64; self.cols];
                x[fc] = 1;
                for (row, &pc) in pivots.iter().enumerate() {
                    x[pc] = f.neg(r.get(row, fc));
                }
                x
            })
            .collect()
    }

    /// Comma-separated integers, one row per line.
    pub fn write_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        for r in 0..self.rows {
            w.write_record(self.row(r).iter().map(u64::to_string))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: io::Read>(input: R, q: u64) -> Result<FieldMatrix, FieldError> {
        let mut rd = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(input);
        let mut rows = Vec::new();
        for rec in rd.records() {
            let rec = rec.map_err(|e| FieldError::Parse(e.to_string()))?;
            let row = rec
                .iter()
                .map(|s| s.parse::<u64>().map_err(|e| FieldError::Parse(format!("{s:?}: {e}"))))
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(row);
        }
        FieldMatrix::from_rows(q, &rows)
    }
}

/// `C(n, k)` in `u128`, saturating.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    acc
}

/// Outcome of an exhaustive row-subset independence check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsetCheck {
    pub independent: bool,
    pub checked: u128,
    /// First dependent subset in lexicographic order.
    pub witness: Option<Vec<usize>>,
}

/// Advances `idx` to the next `k`-combination of `0..n` in lexicographic order.
pub(crate) fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    let Some(pos) = (0..k).rev().find(|&i| idx[i] != i + n - k) else {
        return false;
    };
    idx[pos] += 1;
    for j in pos + 1..k {
        idx[j] = idx[j - 1] + 1;
    }
    true
}

/// Checks that every `k` rows of `m` are linearly independent.
pub fn all_k_subsets_independent(m: &FieldMatrix, k: usize, cap: u128) -> Result<SubsetCheck, FieldError> {
    if k > m.rows() {
        return Err(FieldError::Dimension(format!("k = {k} exceeds {} rows", m.rows())));
    }
    let required = binomial(m.rows(), k);
    if required > cap {
        return Err(FieldError::EnumerationCap { required, cap });
    }
    if k == 0 {
        return Ok(SubsetCheck { independent: true, checked: 1, witness: None });
    }
    let mut idx: Vec<usize> = (0..k).collect();
    let mut checked = 0u128;
    loop {
        checked += 1;
        if m.select_rows(&idx).rank() < k {
            return Ok(SubsetCheck { independent: false, checked, witness: Some(idx) });
        }
        if !next_combination(&mut idx, m.rows()) {
            return Ok(SubsetCheck { independent: true, checked, witness: None });
        }
    }
}
