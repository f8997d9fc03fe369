//! Independent reference implementations used as test oracles. Nothing
//! here calls into the crate.

#![allow(dead_code)]

/// Shift-and-add multiplication in GF(2^8) modulo x^8 + x^4 + x^3 + x + 1.
pub fn gf_mul(mut a: u8, mut b: u8) -> u8 {
    let mut p = 0u8;
    while b != 0 {
        if b & 1 != 0 {
            p ^= a;
        }
        let carry = a & 0x80 != 0;
        a <<= 1;
        if carry {
            a ^= 0x1B;
        }
        b >>= 1;
    }
    p
}

/// a^254 = a^-1 for a != 0.
pub fn gf_inv(a: u8) -> u8 {
    assert_ne!(a, 0);
    let mut result = 1u8;
    let mut base = a;
    let mut e = 254u32;
    while e > 0 {
        if e & 1 == 1 {
            result = gf_mul(result, base);
        }
        base = gf_mul(base, base);
        e >>= 1;
    }
    result
}

/// f(0) from points (x_i, y_i) with distinct nonzero x_i, by the Lagrange
/// formula: sum_i y_i * prod_{j != i} x_j / (x_j - x_i).
pub fn lagrange_at_zero(points: &[(u8, u8)]) -> u8 {
    let mut acc = 0u8;
    for (i, &(xi, yi)) in points.iter().enumerate() {
        let mut num = 1u8;
        let mut den = 1u8;
        for (j, &(xj, _)) in points.iter().enumerate() {
            if i != j {
                num = gf_mul(num, xj);
                den = gf_mul(den, xj ^ xi);
            }
        }
        acc ^= gf_mul(yi, gf_mul(num, gf_inv(den)));
    }
    acc
}

/// All size-k subsets of 0..n in lexicographic order.
pub fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            go(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, k, &mut Vec::new(), &mut out);
    out
}

fn ln_choose(n: u64, k: u64) -> f64 {
    statrs::function::factorial::ln_binomial(n, k)
}

/// P(X <= m) for X ~ Binomial(n, p), summed in log space so tiny tails
/// keep their magnitude.
pub fn binomial_lower_tail(n: u64, p: f64, m: u64) -> f64 {
    (0..=m.min(n)).map(|x| (ln_choose(n, x) + x as f64 * p.ln() + (n - x) as f64 * (1.0 - p).ln()).exp()).sum()
}

/// P(X > m) for X ~ Binomial(n, p).
pub fn binomial_upper_tail(n: u64, p: f64, m: u64) -> f64 {
    (m + 1..=n).map(|x| (ln_choose(n, x) + x as f64 * p.ln() + (n - x) as f64 * (1.0 - p).ln()).exp()).sum()
}

/// Byte-level substring search.
pub fn contains(hay: &[u8], needle: &[u8]) -> bool {
    !needle.is_empty() && needle.len() <= hay.len() && hay.windows(needle.len()).any(|w| w == needle)
}
