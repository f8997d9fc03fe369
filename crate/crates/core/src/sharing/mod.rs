//! Secret sharing of biometric templates.
//!
//! Two schemes are supported:
//!
//! * `Xor2of2`: one-time-pad split into two shares, the byte-oriented stand-in
//!   for 2-of-2 visual cryptography.
//! * `Shamir`: k-of-n threshold sharing with an independent polynomial per
//!   byte over GF(2^8). Share indices are the evaluation points `1..=n`;
//!   `x = 0` holds the secret.

pub mod gf256;

use std::collections::BTreeSet;
use std::fmt;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use zeroize::{Zeroize, ZeroizeOnDrop};

use crate::biometrics::BiometricVector;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SharingError {
    #[error("invalid sharing parameters k={k}, n={n}")]
    InvalidParameters { k: usize, n: usize },
    #[error("need {need} shares, got {got}")]
    InsufficientShares { need: usize, got: usize },
    #[error("duplicate share index {0}")]
    DuplicateIndex(u8),
    #[error("shares disagree on scheme, threshold, count or length")]
    MetadataMismatch,
    #[error("expected {expected:?} shares")]
    WrongScheme { expected: Scheme },
    #[error("malformed share: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Xor2of2,
    Shamir,
}

/// Sharing configuration for a deployment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SharingScheme {
    Xor,
    Shamir { k: u8, n: u8 },
}

impl SharingScheme {
    pub fn threshold(self) -> u8 {
        match self {
            SharingScheme::Xor => 2,
            SharingScheme::Shamir { k, .. } => k,
        }
    }

    pub fn count(self) -> u8 {
        match self {
            SharingScheme::Xor => 2,
            SharingScheme::Shamir { n, .. } => n,
        }
    }

    pub fn validate(self) -> Result<(), SharingError> {
        match self {
            SharingScheme::Xor => Ok(()),
            SharingScheme::Shamir { k, n } => check_threshold(k as usize, n as usize),
        }
    }
}

impl fmt::Display for SharingScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SharingScheme::Xor => f.write_str("xor"),
            SharingScheme::Shamir { k, n } => write!(f, "shamir({k},{n})"),
        }
    }
}

/// One fragment of a split template.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize, Zeroize, ZeroizeOnDrop)]
#[serde(try_from = "ShareRepr", into = "ShareRepr")]
pub struct Share {
    #[zeroize(skip)]
    scheme: Scheme,
    index: u8,
    k: u8,
    n: u8,
    payload: Vec<u8>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ShareRepr {
    scheme: Scheme,
    index: u8,
    k: u8,
    n: u8,
    #[serde(with = "crate::canonical::hex_bytes")]
    payload: Vec<u8>,
}

impl TryFrom<ShareRepr> for Share {
    type Error = SharingError;

    fn try_from(r: ShareRepr) -> Result<Self, Self::Error> {
        Share::new(r.scheme, r.index, r.k, r.n, r.payload.clone())
    }
}

impl From<Share> for ShareRepr {
    fn from(s: Share) -> Self {
        ShareRepr { scheme: s.scheme, index: s.index, k: s.k, n: s.n, payload: s.payload.clone() }
    }
}

impl Share {
    pub fn new(scheme: Scheme, index: u8, k: u8, n: u8, payload: Vec<u8>) -> Result<Self, SharingError> {
        match scheme {
            Scheme::Xor2of2 => {
                if k != 2 || n != 2 {
                    return Err(SharingError::InvalidParameters { k: k.into(), n: n.into() });
                }
                if !(1..=2).contains(&index) {
                    return Err(SharingError::Malformed(format!("xor share index {index}")));
                }
            }
            Scheme::Shamir => {
                check_threshold(k.into(), n.into())?;
                if index == 0 || index > n {
                    return Err(SharingError::Malformed(format!("shamir share index {index} of {n}")));
                }
            }
        }
        if payload.is_empty() {
            return Err(SharingError::Malformed("empty payload".into()));
        }
        Ok(Share { scheme, index, k, n, payload })
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn index(&self) -> u8 {
        self.index
    }

    pub fn threshold(&self) -> u8 {
        self.k
    }

    pub fn count(&self) -> u8 {
        self.n
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }

    /// Test and adversary hook: flips one payload bit.
    pub fn flip_bit(&mut self, bit: usize) {
        self.payload[bit / 8] ^= 0x80 >> (bit % 8);
    }
}

impl fmt::Debug for Share {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Share")
            .field("scheme", &self.scheme)
            .field("index", &self.index)
            .field("k", &self.k)
            .field("n", &self.n)
            .field("payload_len", &self.payload.len())
            .finish()
    }
}

fn check_threshold(k: usize, n: usize) -> Result<(), SharingError> {
    if k < 2 || k > n || n > 255 {
        return Err(SharingError::InvalidParameters { k, n });
    }
    Ok(())
}

/// `share2` is a uniform pad from `rng`; `share1 = ibv XOR pad`.
pub fn split_xor<R: RngCore + ?Sized>(ibv: &BiometricVector, rng: &mut R) -> (Share, Share) {
    let mut pad = vec![0u8; ibv.as_bytes().len()];
    rng.fill_bytes(&mut pad);
    let masked: Vec<u8> = ibv.as_bytes().iter().zip(&pad).map(|(v, p)| v ^ p).collect();
    (
        Share { scheme: Scheme::Xor2of2, index: 1, k: 2, n: 2, payload: masked },
        Share { scheme: Scheme::Xor2of2, index: 2, k: 2, n: 2, payload: pad },
    )
}

pub fn combine_xor(first: &Share, second: &Share) -> Result<BiometricVector, SharingError> {
    for s in [first, second] {
        if s.scheme != Scheme::Xor2of2 {
            return Err(SharingError::WrongScheme { expected: Scheme::Xor2of2 });
        }
    }
    if first.index == second.index {
        return Err(SharingError::DuplicateIndex(first.index));
    }
    if first.payload.len() != second.payload.len() {
        return Err(SharingError::MetadataMismatch);
    }
    let bytes = first.payload.iter().zip(&second.payload).map(|(a, b)| a ^ b).collect();
    Ok(BiometricVector::from_bytes(bytes).expect("payloads are nonempty"))
}

/// Splits every byte of `ibv` with its own degree-(k-1) polynomial. Higher
/// coefficients are drawn from `rng` in one block, `k - 1` per byte.
pub fn split_shamir<R: RngCore + ?Sized>(
    ibv: &BiometricVector,
    k: u8,
    n: u8,
    rng: &mut R,
) -> Result<Vec<Share>, SharingError> {
    check_threshold(k.into(), n.into())?;
    let secret = ibv.as_bytes();
    let degree = usize::from(k) - 1;
    let mut random = zeroize::Zeroizing::new(vec![0u8; secret.len() * degree]);
    rng.fill_bytes(&mut random);

    let mut payloads = vec![Vec::with_capacity(secret.len()); usize::from(n)];
    let mut coefficients = zeroize::Zeroizing::new(vec![0u8; usize::from(k)]);
    for (pos, &byte) in secret.iter().enumerate() {
        coefficients[0] = byte;
        coefficients[1..].copy_from_slice(&random[pos * degree..(pos + 1) * degree]);
        for (i, payload) in payloads.iter_mut().enumerate() {
            payload.push(gf256::eval_poly(&coefficients, i as u8 + 1));
        }
    }
    Ok(payloads
        .into_iter()
        .enumerate()
        .map(|(i, payload)| Share { scheme: Scheme::Shamir, index: i as u8 + 1, k, n, payload })
        .collect())
}

/// Interpolates at zero over every supplied share.
pub fn combine_shamir(shares: &[Share]) -> Result<BiometricVector, SharingError> {
    let first = shares.first().ok_or(SharingError::InsufficientShares { need: 2, got: 0 })?;
    if shares.iter().any(|s| s.scheme != Scheme::Shamir) {
        return Err(SharingError::WrongScheme { expected: Scheme::Shamir });
    }
    check_consistent(shares)?;
    if shares.len() < usize::from(first.k) {
        return Err(SharingError::InsufficientShares { need: first.k.into(), got: shares.len() });
    }

    let mut points = vec![(0u8, 0u8); shares.len()];
    let bytes = (0..first.payload.len())
        .map(|pos| {
            for (p, s) in points.iter_mut().zip(shares) {
                *p = (s.index, s.payload[pos]);
            }
            gf256::interpolate_at_zero(&points)
        })
        .collect();
    points.zeroize();
    Ok(BiometricVector::from_bytes(bytes).expect("payloads are nonempty"))
}

fn check_consistent(shares: &[Share]) -> Result<(), SharingError> {
    let first = &shares[0];
    let mut seen = BTreeSet::new();
    for s in shares {
        if (s.scheme, s.k, s.n, s.payload.len()) != (first.scheme, first.k, first.n, first.payload.len()) {
            return Err(SharingError::MetadataMismatch);
        }
        if !seen.insert(s.index) {
            return Err(SharingError::DuplicateIndex(s.index));
        }
    }
    Ok(())
}

/// Splits according to `scheme`, returning shares ordered by index.
pub fn split<R: RngCore + ?Sized>(
    ibv: &BiometricVector,
    scheme: SharingScheme,
    rng: &mut R,
) -> Result<Vec<Share>, SharingError> {
    match scheme {
        SharingScheme::Xor => {
            let (a, b) = split_xor(ibv, rng);
            Ok(vec![a, b])
        }
        SharingScheme::Shamir { k, n } => split_shamir(ibv, k, n, rng),
    }
}

/// Reconstructs from any qualified set of shares of one scheme.
pub fn combine(shares: &[Share]) -> Result<BiometricVector, SharingError> {
    match shares.first().map(|s| s.scheme) {
        None => Err(SharingError::InsufficientShares { need: 2, got: 0 }),
        Some(Scheme::Xor2of2) => {
            check_consistent(shares)?;
            match shares {
                [a, b] => combine_xor(a, b),
                _ => Err(SharingError::InsufficientShares { need: 2, got: shares.len() }),
            }
        }
        Some(Scheme::Shamir) => combine_shamir(shares),
    }
}
