use super::{BinaryExtField, FieldError, FieldMatrix, PrimeField};

/// Largest null-space dimension [`min_code_distance`] will enumerate.
pub const MIN_DISTANCE_NULLITY_CAP: usize = 20;

/// `N × d` Vandermonde matrix over `F_q` with nodes `α_i = i` for `i = 1..=N`.
///
/// Any `d` rows are independent because the nodes are distinct and nonzero.
pub fn vandermonde_matrix(n: usize, d: usize, q: u64) -> Result<FieldMatrix, FieldError> {
    PrimeField::new(q)?;
    if q <= n as u64 {
        return Err(FieldError::FieldTooSmall { q, n });
    }
    let nodes: Vec<u64> = (1..=n as u64).collect();
    vandermonde_from_nodes(&nodes, d, q)
}

/// Vandermonde matrix with explicit evaluation nodes, which must be distinct
/// modulo `q`. Zero is an allowed node.
pub fn vandermonde_from_nodes(nodes: &[u64], d: usize, q: u64) -> Result<FieldMatrix, FieldError> {
    let f = PrimeField::new(q)?;
    if d == 0 || d > nodes.len() {
        return Err(FieldError::Dimension(format!("need 1 <= d <= N, got d = {d}, N = {}", nodes.len())));
    }
    let mut reduced: Vec<u64> = nodes.iter().map(|&a| f.reduce(a)).collect();
    reduced.sort_unstable();
    if reduced.windows(2).any(|w| w[0] == w[1]) {
        return Err(FieldError::NodesNotDistinct(q));
    }
    let rows: Vec<Vec<u64>> = nodes.iter().map(|&a| (0..d as u64).map(|k| f.pow(a, k)).collect()).collect();
    FieldMatrix::from_rows(q, &rows)
}

/// `∏_{a<b} (α_b − α_a) mod q`, the determinant of the square Vandermonde
/// matrix on `nodes`.
pub fn vandermonde_determinant(nodes: &[u64], q: u64) -> Result<u64, FieldError> {
    let f = PrimeField::new(q)?;
    let mut det = 1 % q;
    for b in 0..nodes.len() {
        for a in 0..b {
            det = f.mul(det, f.sub(f.reduce(nodes[b]), f.reduce(nodes[a])));
        }
    }
    Ok(det)
}

/// Binary rows expressing `c(α^j) = 0` for each `j` in `powers`, `m` rows per
/// constraint, over columns `t = 0..2^m-1`. Row `j·m + b` holds bit `b` of
/// `α^{j t}` in the polynomial basis.
pub fn bch_constraint_rows(field: &BinaryExtField, powers: &[u64]) -> FieldMatrix {
    let n = field.order();
    let m = field.degree() as usize;
    let mut h = FieldMatrix::zeros(powers.len() * m, n, 2).expect("2 is prime");
    for (k, &j) in powers.iter().enumerate() {
        for t in 0..n {
            let v = field.alpha_pow(j * t as u64);
            for b in 0..m {
                if v >> b & 1 == 1 {
                    h.set(k * m + b, t, 1);
                }
            }
        }
    }
    h
}

/// Parity check of the narrow-sense binary BCH code of length `2^m - 1` and
/// designed distance `s`.
///
/// Only odd powers `j ∈ {1, 3, …} ∩ [1, s-1]` get rows: `c(γ) = 0` iff
/// `c(γ²) = 0` over `F_2`, so even powers are redundant. The result has
/// `⌈(s-1)/2⌉·m` rows, some of which may be dependent.
pub fn bch_parity_check(m: u32, s: usize) -> Result<FieldMatrix, FieldError> {
    let field = BinaryExtField::new(m)?;
    let n = field.order();
    if s < 2 || s > n {
        return Err(FieldError::InvalidDistance { s, n });
    }
    let powers: Vec<u64> = (1..s as u64).filter(|j| j % 2 == 1).collect();
    Ok(bch_constraint_rows(&field, &powers))
}

/// Binary matrix with strong row independence built from a BCH parity check.
#[derive(Debug, Clone)]
pub struct BinaryIndependence {
    /// `N × d` over `F_2`; columns beyond the parity rows are zero.
    pub matrix: FieldMatrix,
    pub m: u32,
    /// Designed distance of the underlying code.
    pub s: usize,
    /// `⌊2d/m⌋ − 1`, the advertised parameter with `m` standing in for
    /// `log₂(N + 1)`.
    pub parameter: usize,
    /// `s − 1`, the number of rows the code guarantees independent.
    pub guaranteed: usize,
}

/// `N × d` binary matrix in which every `⌊2d/m⌋ − 1` rows are independent,
/// where `m` is the least degree with `2^m − 1 ≥ N`.
///
/// Takes `t = ⌊d/m⌋` odd-power constraints (designed distance `s = 2t + 1`),
/// keeps the first `N` columns of the parity check `H`, and returns `Hᵀ`
/// padded with zero columns up to width `d`.
pub fn binary_independence_matrix(n: usize, d: usize) -> Result<BinaryIndependence, FieldError> {
    if d == 0 || d > n {
        return Err(FieldError::Dimension(format!("need 1 <= d <= N, got d = {d}, N = {n}")));
    }
    let mut m = 2u32;
    while ((1usize << m) - 1) < n {
        m += 1;
    }
    let parameter = (2 * d / m as usize) as i64 - 1;
    if parameter < 1 {
        return Err(FieldError::DegenerateParameter(parameter));
    }
    let field = BinaryExtField::new(m)?;
    let full_len = field.order();
    let mut t = d / m as usize;
    while 2 * t >= full_len {
        t -= 1;
    }
    let s = 2 * t + 1;
    let powers: Vec<u64> = (0..t as u64).map(|k| 2 * k + 1).collect();
    let h = bch_constraint_rows(&field, &powers);
    let kept: Vec<usize> = (0..n).collect();
    let k = h.select_cols(&kept).transpose();
    let mut matrix = FieldMatrix::zeros(n, d, 2)?;
    for r in 0..n {
        for c in 0..k.cols() {
            matrix.set(r, c, k.get(r, c));
        }
    }
    Ok(BinaryIndependence { matrix, m, s, parameter: parameter as usize, guaranteed: s - 1 })
}

/// Minimum Hamming weight of a nonzero codeword in the null space of the
/// binary parity check `h`; `None` when the null space is trivial.
pub fn min_code_distance(h: &FieldMatrix) -> Result<Option<usize>, FieldError> {
    if h.modulus() != 2 {
        return Err(FieldError::NotBinary(h.modulus()));
    }
    let basis = h.null_space_basis();
    if basis.len() > MIN_DISTANCE_NULLITY_CAP {
        return Err(FieldError::EnumerationCap {
            required: 1u128 << basis.len(),
            cap: 1u128 << MIN_DISTANCE_NULLITY_CAP,
        });
    }
    if basis.is_empty() {
        return Ok(None);
    }
    let words = h.cols().div_ceil(64);
    let packed: Vec<Vec<u64>> = basis
        .iter()
        .map(|v| {
            let mut w = vec![0u64; words];
            for (i, &bit) in v.iter().enumerate() {
                if bit == 1 {
                    w[i / 64] |= 1 << (i % 64);
                }
            }
            w
        })
        .collect();
    // Walk all nonzero combinations in Gray-code order, one XOR per step.
    let mut current = vec![0u64; words];
    let mut best = usize::MAX;
    for step in 1u64..(1u64 << packed.len()) {
        let flip = step.trailing_zeros() as usize;
        for (c, b) in current.iter_mut().zip(&packed[flip]) {
            *c ^= b;
        }
        let weight: usize = current.iter().map(|w| w.count_ones() as usize).sum();
        best = best.min(weight);
    }
    Ok(Some(best))
}
