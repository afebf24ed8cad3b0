//! Row-major `f64` matrices with block views and CSV / binary file formats.
//!
//! Binary layout: `rows: u32 LE`, `cols: u32 LE`, then `rows * cols` values
//! as `f64 LE` in row-major order.

use std::io::{self, Read, Write};
use std::ops::Range;

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MatrixError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("matrix must have at least one row and one column")]
    Empty,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("bad number {0:?}")]
    Number(String),
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("binary payload has {got} bytes, header promises {expected}")]
    Truncated { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// Index ranges covered by block `(i, j)` of size `b`, clipped at the edges.
/// Block indices are 0-based: block `(i, j)` covers rows `i*b .. (i+1)*b`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockView {
    pub rows: Range<usize>,
    pub cols: Range<usize>,
}

/// Range of block `i` of size `b` over an axis of length `len`.
pub fn block_range(len: usize, b: usize, i: usize) -> Range<usize> {
    let start = (i * b).min(len);
    start..((i + 1) * b).min(len)
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        DenseMatrix { rows, cols, data: vec![value; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, MatrixError> {
        if data.len() != rows * cols {
            return Err(MatrixError::Shape(format!("{} values for a {rows}x{cols} matrix", data.len())));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, MatrixError> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(MatrixError::Shape("ragged rows".into()));
        }
        Ok(DenseMatrix { rows: rows.len(), cols, data: rows.concat() })
    }

    /// Entries drawn uniformly from `[-bound, bound]`.
    pub fn random_uniform<R: Rng + ?Sized>(rows: usize, cols: usize, bound: f64, rng: &mut R) -> Self {
        let data = (0..rows * cols).map(|_| rng.gen_range(-bound..=bound)).collect();
        DenseMatrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        self.data[r * self.cols + c] = value;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn block(&self, b: usize, i: usize, j: usize) -> BlockView {
        BlockView { rows: block_range(self.rows, b, i), cols: block_range(self.cols, b, j) }
    }

    /// Copy of block `(i, j)` of size `b`.
    pub fn block_copy(&self, b: usize, i: usize, j: usize) -> DenseMatrix {
        let v = self.block(b, i, j);
        let mut out = DenseMatrix::zeros(v.rows.len(), v.cols.len());
        for (ro, r) in v.rows.clone().enumerate() {
            for (co, c) in v.cols.clone().enumerate() {
                out.set(ro, co, self.get(r, c));
            }
        }
        out
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = DenseMatrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.set(c, r, self.get(r, c));
            }
        }
        t
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix, MatrixError> {
        if self.cols != other.rows {
            return Err(MatrixError::Shape(format!("{}x{} times {}x{}", self.rows, self.cols, other.rows, other.cols)));
        }
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.get(k, j);
                }
            }
        }
        Ok(out)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// `‖self − reference‖_F / ‖reference‖_F`, or the absolute error when the
    /// reference is zero.
    pub fn relative_error(&self, reference: &DenseMatrix) -> f64 {
        assert_eq!((self.rows, self.cols), (reference.rows, reference.cols), "shape mismatch");
        let diff = self.data.iter().zip(&reference.data).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let norm = reference.frobenius_norm();
        if norm == 0.0 {
            diff
        } else {
            diff / norm
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), MatrixError> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        for r in 0..self.rows {
            w.write_record(self.row(r).iter().map(|x| format!("{x:?}")))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<DenseMatrix, MatrixError> {
        let mut rd = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(input);
        let mut rows = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|s| s.parse::<f64>().map_err(|_| MatrixError::Number(s.to_string())))
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(MatrixError::Empty);
        }
        DenseMatrix::from_rows(&rows)
    }

    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<(), MatrixError> {
        let rows = u32::try_from(self.rows).map_err(|_| MatrixError::Shape("too many rows".into()))?;
        let cols = u32::try_from(self.cols).map_err(|_| MatrixError::Shape("too many cols".into()))?;
        out.write_all(&rows.to_le_bytes())?;
        out.write_all(&cols.to_le_bytes())?;
        for x in &self.data {
            out.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut input: R) -> Result<DenseMatrix, MatrixError> {
        let mut header = [0u8; 8];
        input.read_exact(&mut header)?;
        let rows = u32::from_le_bytes(header[..4].try_into().unwrap()) as usize;
        let cols = u32::from_le_bytes(header[4..].try_into().unwrap()) as usize;
        let mut payload = Vec::new();
        input.read_to_end(&mut payload)?;
        let expected = rows * cols * 8;
        if payload.len() != expected {
            return Err(MatrixError::Truncated { expected, got: payload.len() });
        }
        let data = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(DenseMatrix { rows, cols, data })
    }
}
