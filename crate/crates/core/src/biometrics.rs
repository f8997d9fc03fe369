//! Synthetic biometric templates and fractional-Hamming matching.
//!
//! A template is a fixed-length bit vector (iris-code style). Bit `i` lives in
//! byte `i / 8`, most significant bit first, so the byte form is the
//! big-endian serialization of the vector.

use std::fmt;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use zeroize::{Zeroize, ZeroizeOnDrop};

pub const DEFAULT_LENGTH: usize = 512;
pub const DEFAULT_THRESHOLD: f64 = 0.32;
pub const GENUINE_FLIP_PROB: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BiometricError {
    #[error("vector length {0} must be positive and a multiple of 8")]
    InvalidLength(usize),
    #[error("probability {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error("vector lengths differ: {left} vs {right} bits")]
    LengthMismatch { left: usize, right: usize },
}

/// Fixed-length bit vector standing in for an IBV or CBV.
///
/// The buffer is wiped when the value is dropped.
#[derive(Clone, PartialEq, Eq, Zeroize, ZeroizeOnDrop)]
pub struct BiometricVector {
    bytes: Vec<u8>,
}

impl BiometricVector {
    pub fn from_bytes(bytes: Vec<u8>) -> Result<Self, BiometricError> {
        if bytes.is_empty() {
            return Err(BiometricError::InvalidLength(0));
        }
        Ok(Self { bytes })
    }

    /// Uniformly random vector of `length` bits drawn from `rng`.
    pub fn random<R: RngCore + ?Sized>(rng: &mut R, length: usize) -> Result<Self, BiometricError> {
        check_length(length)?;
        let mut bytes = vec![0u8; length / 8];
        rng.fill_bytes(&mut bytes);
        Ok(Self { bytes })
    }

    /// Flips every bit independently with probability `flip_prob`.
    pub fn with_noise<R: Rng + ?Sized>(&self, flip_prob: f64, rng: &mut R) -> Result<Self, BiometricError> {
        check_probability(flip_prob)?;
        let mut out = self.clone();
        for bit in 0..self.len() {
            if rng.gen_bool(flip_prob) {
                out.flip_bit(bit);
            }
        }
        Ok(out)
    }

    /// Length in bits.
    pub fn len(&self) -> usize {
        self.bytes.len() * 8
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn bit(&self, index: usize) -> bool {
        self.bytes[index / 8] & (0x80 >> (index % 8)) != 0
    }

    pub fn flip_bit(&mut self, index: usize) {
        self.bytes[index / 8] ^= 0x80 >> (index % 8);
    }

    pub fn complement(&self) -> Self {
        Self { bytes: self.bytes.iter().map(|b| !b).collect() }
    }

    /// Number of differing bits.
    pub fn hamming_distance(&self, other: &Self) -> Result<usize, BiometricError> {
        if self.len() != other.len() {
            return Err(BiometricError::LengthMismatch { left: self.len(), right: other.len() });
        }
        Ok(self
            .bytes
            .iter()
            .zip(&other.bytes)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum())
    }
}

impl fmt::Debug for BiometricVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BiometricVector({} bits)", self.len())
    }
}

impl Serialize for BiometricVector {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(&self.bytes))
    }
}

impl<'de> Deserialize<'de> for BiometricVector {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let bytes = crate::canonical::decode_hex(&s).map_err(serde::de::Error::custom)?;
        Self::from_bytes(bytes).map_err(serde::de::Error::custom)
    }
}

fn check_length(length: usize) -> Result<(), BiometricError> {
    if length == 0 || !length.is_multiple_of(8) {
        return Err(BiometricError::InvalidLength(length));
    }
    Ok(())
}

fn check_probability(p: f64) -> Result<(), BiometricError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(BiometricError::InvalidProbability(p));
    }
    Ok(())
}

/// Outcome of comparing a candidate against a reference template.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub distance: f64,
    pub threshold: f64,
    pub accepted: bool,
}

/// Reproducible enrollment template.
pub fn generate_ibv(seed: u64, length: usize) -> Result<BiometricVector, BiometricError> {
    BiometricVector::random(&mut ChaCha20Rng::seed_from_u64(seed), length)
}

/// Reproducible noisy re-capture of `ibv`.
pub fn derive_cbv(
    ibv: &BiometricVector,
    flip_prob: f64,
    seed: u64,
) -> Result<BiometricVector, BiometricError> {
    ibv.with_noise(flip_prob, &mut ChaCha20Rng::seed_from_u64(seed))
}

/// Fractional Hamming distance match. Inputs are only borrowed; nothing is
/// retained.
pub fn match_vectors(
    reference: &BiometricVector,
    candidate: &BiometricVector,
    threshold: f64,
) -> Result<MatchResult, BiometricError> {
    check_probability(threshold)?;
    let differing = reference.hamming_distance(candidate)?;
    let distance = differing as f64 / reference.len() as f64;
    Ok(MatchResult { distance, threshold, accepted: distance <= threshold })
}
