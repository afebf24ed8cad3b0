//! Exact linear algebra over prime fields, plus the two independence
//! constructions used by the compression experiments: Vandermonde matrices
//! over `F_q` and transposed binary BCH parity checks over `F_2`.

mod codes;
mod gf2m;
mod matrix;

pub use codes::{
    bch_constraint_rows, bch_parity_check, binary_independence_matrix, min_code_distance, vandermonde_determinant,
    vandermonde_from_nodes, vandermonde_matrix, BinaryIndependence, MIN_DISTANCE_NULLITY_CAP,
};
pub use gf2m::{BinaryExtField, PRIMITIVE_POLYNOMIALS};
pub use matrix::{all_k_subsets_independent, binomial, FieldMatrix, SubsetCheck, DEFAULT_SUBSET_CAP};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("modulus {0} is not prime")]
    NotPrime(u64),
    #[error("need a field larger than N: q = {q}, N = {n}")]
    FieldTooSmall { q: u64, n: usize },
    #[error("evaluation nodes are not distinct modulo {0}")]
    NodesNotDistinct(u64),
    #[error("invalid dimensions: {0}")]
    Dimension(String),
    #[error("no stored primitive polynomial for extension degree {0} (supported: 2..=10)")]
    NoPrimitivePolynomial(u32),
    #[error("polynomial {poly:#x} does not make x primitive in GF(2^{m})")]
    NotPrimitive { m: u32, poly: u32 },
    #[error("designed distance {s} out of range for length {n}")]
    InvalidDistance { s: usize, n: usize },
    #[error("independence parameter {0} < 1; increase d or decrease N")]
    DegenerateParameter(i64),
    #[error("enumeration of {required} cases exceeds cap {cap}")]
    EnumerationCap { required: u128, cap: u128 },
    #[error("operation needs a binary matrix, got modulus {0}")]
    NotBinary(u64),
    #[error("matrix parse error: {0}")]
    Parse(String),
}

/// Deterministic trial-division primality test; moduli here are small.
pub fn is_prime(q: u64) -> bool {
    if q < 2 {
        return false;
    }
    if q < 4 {
        return true;
    }
    if q.is_multiple_of(2) {
        return false;
    }
    let mut f = 3u64;
    while f.saturating_mul(f) <= q {
        if q.is_multiple_of(f) {
            return false;
        }
        f += 2;
    }
    true
}

/// The prime field `F_q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PrimeField {
    q: u64,
}

impl PrimeField {
    pub fn new(q: u64) -> Result<Self, FieldError> {
        if is_prime(q) {
            Ok(PrimeField { q })
        } else {
            Err(FieldError::NotPrime(q))
        }
    }

    pub fn modulus(&self) -> u64 {
        self.q
    }

    #[inline]
    pub fn reduce(&self, a: u64) -> u64 {
        a % self.q
    }

    #[inline]
    pub fn add(&self, a: u64, b: u64) -> u64 {
        let s = a + b;
        if s >= self.q {
            s - self.q
        } else {
            s
        }
    }

    #[inline]
    pub fn sub(&self, a: u64, b: u64) -> u64 {
        if a >= b {
            a - b
        } else {
            a + self.q - b
        }
    }

    #[inline]
    pub fn neg(&self, a: u64) -> u64 {
        if a == 0 {
            0
        } else {
            self.q - a
        }
    }

    #[inline]
    pub fn mul(&self, a: u64, b: u64) -> u64 {
        ((a as u128 * b as u128) % self.q as u128) as u64
    }

    pub fn pow(&self, mut base: u64, mut exp: u64) -> u64 {
        let mut acc = 1 % self.q;
        base %= self.q;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            exp >>= 1;
        }
        acc
    }

    /// Multiplicative inverse; `None` for zero.
    pub fn inv(&self, a: u64) -> Option<u64> {
        let a = a % self.q;
        (a != 0).then(|| self.pow(a, self.q - 2))
    }
}
