//! Sanity checks on the test oracles themselves, plus the crate's field
//! arithmetic against them.

mod common;

use horcrux::sharing::gf256;

#[test]
fn oracle_known_values() {
    assert_eq!(common::gf_mul(0x57, 0x83), 0xC1);
    assert_eq!(common::gf_inv(0x53), 0xCA);
    // f(x) = 0x2A + 0x07 x sampled at x = 1, 2
    let pts = [(1, 0x2A ^ 0x07), (2, 0x2A ^ common::gf_mul(0x07, 2))];
    assert_eq!(common::lagrange_at_zero(&pts), 0x2A);
    assert_eq!(common::subsets(5, 3).len(), 10);
    assert!((common::binomial_lower_tail(20, 0.3, 20) - 1.0).abs() < 1e-12);
    let split = common::binomial_lower_tail(30, 0.4, 11) + common::binomial_upper_tail(30, 0.4, 11);
    assert!((split - 1.0).abs() < 1e-12);
}

#[test]
fn field_matches_oracle() {
    for a in 0..=255u8 {
        for b in 0..=255u8 {
            assert_eq!(gf256::mul(a, b), common::gf_mul(a, b));
        }
        if a != 0 {
            assert_eq!(gf256::inv(a), Some(common::gf_inv(a)));
        }
    }
}

#[test]
fn interpolation_matches_oracle() {
    // every degree-2 polynomial with constant term s and a fixed pair of
    // higher coefficients, sampled at three points
    for s in 0..=255u8 {
        let coeffs = [s, s.wrapping_mul(7) ^ 0x55, s.rotate_left(3) | 1];
        let pts: Vec<(u8, u8)> = [3u8, 9, 200].iter().map(|&x| (x, gf256::eval_poly(&coeffs, x))).collect();
        assert_eq!(gf256::interpolate_at_zero(&pts), s);
        assert_eq!(common::lagrange_at_zero(&pts), s);
    }
}
