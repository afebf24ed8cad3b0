use super::FieldError;

/// Primitive polynomials over `F_2` for degrees 2..=10, as bitmasks with bit
/// `i` holding the coefficient of `x^i`.
pub const PRIMITIVE_POLYNOMIALS: [(u32, u32); 9] = [
    (2, 0b111),       // x^2 + x + 1
    (3, 0b1011),      // x^3 + x + 1
    (4, 0b1_0011),    // x^4 + x + 1
    (5, 0b10_0101),   // x^5 + x^2 + 1
    (6, 0b100_0011),  // x^6 + x + 1
    (7, 0b1000_1001), // x^7 + x^3 + 1
    (8, 0x11d),       // x^8 + x^4 + x^3 + x^2 + 1
    (9, 0x211),       // x^9 + x^4 + 1
    (10, 0x409),      // x^10 + x^3 + 1
];

/// `GF(2^m)` in the polynomial basis `{1, α, …, α^{m-1}}` with `α = x`.
#[derive(Debug, Clone)]
pub struct BinaryExtField {
    m: u32,
    poly: u32,
    /// `powers[e] = α^e` for `e < 2^m - 1`.
    powers: Vec<u32>,
}

impl BinaryExtField {
    pub fn new(m: u32) -> Result<Self, FieldError> {
        let poly = PRIMITIVE_POLYNOMIALS
            .iter()
            .find(|(deg, _)| *deg == m)
            .map(|&(_, p)| p)
            .ok_or(FieldError::NoPrimitivePolynomial(m))?;
        Self::with_polynomial(m, poly)
    }

    /// Builds the field from an arbitrary degree-`m` polynomial, checking that
    /// `x` has multiplicative order exactly `2^m - 1`.
    pub fn with_polynomial(m: u32, poly: u32) -> Result<Self, FieldError> {
        if !(1..=20).contains(&m) || poly >> m != 1 {
            return Err(FieldError::NotPrimitive { m, poly });
        }
        let order = (1u32 << m) - 1;
        let mut powers = Vec::with_capacity(order as usize);
        let mut x = 1u32;
        for e in 0..order {
            if e > 0 && x == 1 {
                return Err(FieldError::NotPrimitive { m, poly });
            }
            powers.push(x);
            x <<= 1;
            if x >> m & 1 == 1 {
                x ^= poly;
            }
        }
        if x != 1 {
            return Err(FieldError::NotPrimitive { m, poly });
        }
        Ok(BinaryExtField { m, poly, powers })
    }

    pub fn degree(&self) -> u32 {
        self.m
    }

    pub fn polynomial(&self) -> u32 {
        self.poly
    }

    /// Size of the multiplicative group, `2^m - 1`.
    pub fn order(&self) -> usize {
        self.powers.len()
    }

    /// `α^e` as a bit vector in the polynomial basis.
    pub fn alpha_pow(&self, e: u64) -> u32 {
        self.powers[(e % self.order() as u64) as usize]
    }

    /// Carry-less product reduced modulo the field polynomial.
    pub fn mul(&self, mut a: u32, mut b: u32) -> u32 {
        let mut acc = 0u32;
        while b != 0 {
            if b & 1 == 1 {
                acc ^= a;
            }
            b >>= 1;
            a <<= 1;
            if a >> self.m & 1 == 1 {
                a ^= self.poly;
            }
        }
        acc
    }
}
