//! Arithmetic in GF(2^8) with reduction polynomial x^8 + x^4 + x^3 + x + 1
//! (0x11B), using log/antilog tables over generator 0x03.

const POLY: u16 = 0x11B;

const fn build_tables() -> ([u8; 512], [u8; 256]) {
    let mut exp = [0u8; 512];
    let mut log = [0u8; 256];
    let mut x: u16 = 1;
    let mut i = 0;
    while i < 255 {
        exp[i] = x as u8;
        log[x as usize] = i as u8;
        // x *= 3, i.e. x ^ (x << 1), reduced.
        let mut next = x ^ (x << 1);
        if next & 0x100 != 0 {
            next ^= POLY;
        }
        x = next;
        i += 1;
    }
    // Doubled so mul can index log[a] + log[b] without a modulo.
    while i < 512 {
        exp[i] = exp[i - 255];
        i += 1;
    }
    (exp, log)
}

const TABLES: ([u8; 512], [u8; 256]) = build_tables();
const EXP: [u8; 512] = TABLES.0;
const LOG: [u8; 256] = TABLES.1;

#[inline]
pub fn add(a: u8, b: u8) -> u8 {
    a ^ b
}

#[inline]
pub fn mul(a: u8, b: u8) -> u8 {
    if a == 0 || b == 0 {
        return 0;
    }
    EXP[LOG[a as usize] as usize + LOG[b as usize] as usize]
}

/// Multiplicative inverse; `None` for zero.
#[inline]
pub fn inv(a: u8) -> Option<u8> {
    if a == 0 {
        None
    } else {
        Some(EXP[255 - LOG[a as usize] as usize])
    }
}

#[inline]
pub fn div(a: u8, b: u8) -> Option<u8> {
    inv(b).map(|ib| mul(a, ib))
}

/// Evaluates a polynomial (constant term first) at `x` by Horner's rule.
pub fn eval_poly(coefficients: &[u8], x: u8) -> u8 {
    coefficients.iter().rev().fold(0u8, |acc, &c| add(mul(acc, x), c))
}

/// Lagrange interpolation of the points at x = 0. The x values must be
/// distinct and nonzero.
pub fn interpolate_at_zero(points: &[(u8, u8)]) -> u8 {
    let mut secret = 0u8;
    for (i, &(xi, yi)) in points.iter().enumerate() {
        let mut basis = 1u8;
        for (j, &(xj, _)) in points.iter().enumerate() {
            if i != j {
                // (0 - xj) / (xi - xj) with subtraction = XOR.
                basis = mul(basis, div(xj, xi ^ xj).expect("distinct x values"));
            }
        }
        secret ^= mul(yi, basis);
    }
    secret
}
