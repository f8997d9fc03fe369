//! Keys, sealed envelopes, possession tags, digests and signatures.
//!
//! Concrete primitives:
//!
//! * sealing: ephemeral X25519 agreement, HKDF-SHA256, ChaCha20-Poly1305
//!   (an ECIES-style KEM/DEM). The recipient key id and the challenge nonce
//!   are authenticated as associated data.
//! * signatures: Ed25519.
//! * keyed tags: HMAC-SHA256.
//! * digests: SHA-256.
//!
//! Every key pair carries both an X25519 and an Ed25519 half, derived from a
//! single 32-byte secret, so one public key serves as sealing recipient and
//! verification key.

use std::fmt;

use chacha20poly1305::aead::{AeadInPlace, KeyInit};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce as AeadNonce, Tag};
use ed25519_dalek::{Signer, Verifier};
use hkdf::Hkdf;
use hmac::{Hmac, Mac};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use zeroize::{Zeroize, ZeroizeOnDrop, Zeroizing};

use crate::canonical::{self, hex_newtype_serde};

/// Logical simulation time.
pub type Tick = u64;

pub const DEFAULT_CHALLENGE_TTL: Tick = 100;

const PUBLIC_KEY_LEN: usize = 64;
const ENVELOPE_INFO: &[u8] = b"horcrux/envelope/v1";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CryptoError {
    #[error("keyed tag requires a nonempty key")]
    EmptyKey,
    #[error("{0:?} keys cannot sign")]
    RoleCannotSign(KeyRole),
    #[error(transparent)]
    Challenge(#[from] ChallengeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum ChallengeError {
    #[error("challenge expired")]
    Expired,
    #[error("challenge already consumed")]
    Consumed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum EnvelopeError {
    #[error("envelope sealed to a different key")]
    KeyMismatch,
    #[error("envelope bound to a different challenge")]
    ChallengeMismatch,
    #[error("integrity tag does not verify")]
    TagFailure,
    #[error("malformed envelope")]
    Malformed,
}

/// 32-byte SHA-256 output.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Hash256(pub [u8; 32]);

hex_newtype_serde!(Hash256, 32);

impl Hash256 {
    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for Hash256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Hash256({})", &self.to_hex()[..16])
    }
}

impl fmt::Display for Hash256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

pub fn digest(data: &[u8]) -> Hash256 {
    Hash256(Sha256::digest(data).into())
}

/// Digest over the concatenation of `parts`.
pub fn digest_parts(parts: &[&[u8]]) -> Hash256 {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    Hash256(h.finalize().into())
}

/// Identifier of a public key: its digest.
pub type KeyId = Hash256;

/// Challenge nonce, also used as the session identifier width.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Nonce(pub [u8; 16]);

hex_newtype_serde!(Nonce, 16);

impl Nonce {
    pub fn random<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        let mut n = [0u8; 16];
        rng.fill_bytes(&mut n);
        Nonce(n)
    }

    pub fn as_bytes(&self) -> &[u8; 16] {
        &self.0
    }
}

impl fmt::Debug for Nonce {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Nonce({})", hex::encode(self.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyRole {
    /// Server key pair (RKP).
    Rkp,
    /// Device key pair (LKP).
    Lkp,
    IssuerSigning,
}

/// X25519 public half followed by the Ed25519 verification key.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PublicKey(pub [u8; PUBLIC_KEY_LEN]);

hex_newtype_serde!(PublicKey, 64);

impl PublicKey {
    pub fn as_bytes(&self) -> &[u8; PUBLIC_KEY_LEN] {
        &self.0
    }

    pub fn key_id(&self) -> KeyId {
        digest(&self.0)
    }

    fn agreement_key(&self) -> x25519_dalek::PublicKey {
        let mut b = [0u8; 32];
        b.copy_from_slice(&self.0[..32]);
        x25519_dalek::PublicKey::from(b)
    }

    fn verifying_key(&self) -> Option<ed25519_dalek::VerifyingKey> {
        let mut b = [0u8; 32];
        b.copy_from_slice(&self.0[32..]);
        ed25519_dalek::VerifyingKey::from_bytes(&b).ok()
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", &self.key_id().to_hex()[..16])
    }
}

/// Private half. Never serialized; wiped on drop.
#[derive(Clone, Zeroize, ZeroizeOnDrop)]
pub struct SecretKey([u8; 32]);

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SecretKey(<redacted>)")
    }
}

impl SecretKey {
    fn derive(&self, label: &[u8]) -> Zeroizing<[u8; 32]> {
        let hk = Hkdf::<Sha256>::new(Some(b"horcrux/keypair/v1"), &self.0);
        let mut out = Zeroizing::new([0u8; 32]);
        hk.expand(label, out.as_mut()).expect("32 bytes is a valid HKDF length");
        out
    }

    fn agreement_secret(&self) -> x25519_dalek::StaticSecret {
        x25519_dalek::StaticSecret::from(*self.derive(b"x25519"))
    }

    fn signing_key(&self) -> ed25519_dalek::SigningKey {
        ed25519_dalek::SigningKey::from_bytes(&self.derive(b"ed25519"))
    }
}

#[derive(Clone)]
pub struct KeyPair {
    role: KeyRole,
    public: PublicKey,
    secret: SecretKey,
    key_id: KeyId,
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair")
            .field("role", &self.role)
            .field("key_id", &self.key_id)
            .finish_non_exhaustive()
    }
}

impl KeyPair {
    pub fn generate<R: RngCore + ?Sized>(role: KeyRole, rng: &mut R) -> Self {
        let mut seed = [0u8; 32];
        rng.fill_bytes(&mut seed);
        Self::from_secret(role, SecretKey(seed))
    }

    fn from_secret(role: KeyRole, secret: SecretKey) -> Self {
        let x_pub = x25519_dalek::PublicKey::from(&secret.agreement_secret());
        let ed_pub = secret.signing_key().verifying_key();
        let mut public = [0u8; PUBLIC_KEY_LEN];
        public[..32].copy_from_slice(x_pub.as_bytes());
        public[32..].copy_from_slice(ed_pub.as_bytes());
        let public = PublicKey(public);
        KeyPair { role, key_id: public.key_id(), public, secret }
    }

    pub fn role(&self) -> KeyRole {
        self.role
    }

    pub fn public(&self) -> &PublicKey {
        &self.public
    }

    pub fn key_id(&self) -> &KeyId {
        &self.key_id
    }

    /// Raw private bytes, exposed only so leakage scans have a needle.
    pub fn expose_secret(&self) -> &[u8; 32] {
        &self.secret.0
    }
}

/// Deterministic key generation; reproducible simulation transcripts depend
/// on it.
pub fn generate_keypair(role: KeyRole, seed: u64) -> KeyPair {
    KeyPair::generate(role, &mut ChaCha20Rng::seed_from_u64(seed))
}

/// One-time server challenge. Valid while `now < issued_at + expires_after`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Challenge {
    pub nonce: Nonce,
    pub issued_at: Tick,
    pub expires_after: Tick,
    pub consumed: bool,
}

impl Challenge {
    pub fn issue<R: RngCore + ?Sized>(rng: &mut R, now: Tick, ttl: Tick) -> Self {
        Challenge { nonce: Nonce::random(rng), issued_at: now, expires_after: ttl, consumed: false }
    }

    pub fn is_expired(&self, now: Tick) -> bool {
        now >= self.issued_at.saturating_add(self.expires_after)
    }

    pub fn check_usable(&self, now: Tick) -> Result<(), ChallengeError> {
        if self.consumed {
            Err(ChallengeError::Consumed)
        } else if self.is_expired(now) {
            Err(ChallengeError::Expired)
        } else {
            Ok(())
        }
    }

    /// Marks the challenge used. A second call fails.
    pub fn consume(&mut self, now: Tick) -> Result<(), ChallengeError> {
        self.check_usable(now)?;
        self.consumed = true;
        Ok(())
    }
}

/// Public-key-sealed payload bound to a recipient and a challenge.
///
/// `ciphertext` is the 32-byte ephemeral X25519 key followed by the AEAD
/// body; `integrity_tag` is the detached Poly1305 tag.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Envelope {
    pub recipient_key_id: KeyId,
    pub challenge_id: Nonce,
    #[serde(with = "canonical::base64_bytes")]
    pub ciphertext: Vec<u8>,
    #[serde(with = "canonical::base64_bytes")]
    pub integrity_tag: Vec<u8>,
}

impl Envelope {
    pub fn canonical_bytes(&self) -> Vec<u8> {
        canonical::to_canonical_bytes(self)
    }
}

fn envelope_cipher(
    shared: &x25519_dalek::SharedSecret,
    ephemeral: &[u8; 32],
    recipient: &PublicKey,
) -> (ChaCha20Poly1305, AeadNonce) {
    let hk = Hkdf::<Sha256>::new(Some(ephemeral), shared.as_bytes());
    let mut okm = Zeroizing::new([0u8; 44]);
    let mut info = ENVELOPE_INFO.to_vec();
    info.extend_from_slice(recipient.as_bytes());
    hk.expand(&info, okm.as_mut()).expect("44 bytes is a valid HKDF length");
    let cipher = ChaCha20Poly1305::new(Key::from_slice(&okm[..32]));
    (cipher, *AeadNonce::from_slice(&okm[32..]))
}

fn associated_data(recipient_key_id: &KeyId, binding: &Nonce) -> Vec<u8> {
    [ENVELOPE_INFO, recipient_key_id.as_bytes(), binding.as_bytes()].concat()
}

/// Seals `payload` to `recipient` under an arbitrary binding value. Used
/// directly for at-rest credentials; wire traffic goes through
/// [`seal_envelope`].
pub fn seal_bound<R: RngCore + ?Sized>(
    payload: &[u8],
    recipient: &PublicKey,
    binding: Nonce,
    rng: &mut R,
) -> Envelope {
    let mut eph_bytes = Zeroizing::new([0u8; 32]);
    rng.fill_bytes(eph_bytes.as_mut());
    let ephemeral = x25519_dalek::StaticSecret::from(*eph_bytes);
    let eph_public = x25519_dalek::PublicKey::from(&ephemeral);
    let shared = ephemeral.diffie_hellman(&recipient.agreement_key());

    let recipient_key_id = recipient.key_id();
    let (cipher, nonce) = envelope_cipher(&shared, eph_public.as_bytes(), recipient);
    let mut body = payload.to_vec();
    let tag = cipher
        .encrypt_in_place_detached(&nonce, &associated_data(&recipient_key_id, &binding), &mut body)
        .expect("payload within ChaCha20-Poly1305 limits");

    let mut ciphertext = eph_public.as_bytes().to_vec();
    ciphertext.append(&mut body);
    Envelope { recipient_key_id, challenge_id: binding, ciphertext, integrity_tag: tag.to_vec() }
}

/// Opens an envelope sealed with [`seal_bound`].
pub fn open_bound(
    env: &Envelope,
    recipient: &KeyPair,
    binding: &Nonce,
) -> Result<Zeroizing<Vec<u8>>, EnvelopeError> {
    if env.recipient_key_id != recipient.key_id {
        return Err(EnvelopeError::KeyMismatch);
    }
    if env.challenge_id != *binding {
        return Err(EnvelopeError::ChallengeMismatch);
    }
    if env.ciphertext.len() < 32 || env.integrity_tag.len() != 16 {
        return Err(EnvelopeError::Malformed);
    }
    let mut eph = [0u8; 32];
    eph.copy_from_slice(&env.ciphertext[..32]);
    let shared = recipient
        .secret
        .agreement_secret()
        .diffie_hellman(&x25519_dalek::PublicKey::from(eph));
    let (cipher, nonce) = envelope_cipher(&shared, &eph, &recipient.public);
    let mut body = Zeroizing::new(env.ciphertext[32..].to_vec());
    cipher
        .decrypt_in_place_detached(
            &nonce,
            &associated_data(&env.recipient_key_id, &env.challenge_id),
            &mut body,
            Tag::from_slice(&env.integrity_tag),
        )
        .map_err(|_| EnvelopeError::TagFailure)?;
    Ok(body)
}

/// Seals `payload` for `recipient`, binding the challenge nonce into the
/// authenticated data. The challenge must still be usable at `now`.
pub fn seal_envelope<R: RngCore + ?Sized>(
    payload: &[u8],
    recipient: &PublicKey,
    challenge: &Challenge,
    now: Tick,
    rng: &mut R,
) -> Result<Envelope, CryptoError> {
    challenge.check_usable(now)?;
    Ok(seal_bound(payload, recipient, challenge.nonce, rng))
}

pub fn open_envelope(
    env: &Envelope,
    recipient: &KeyPair,
    expected_challenge: &Challenge,
) -> Result<Zeroizing<Vec<u8>>, EnvelopeError> {
    open_bound(env, recipient, &expected_challenge.nonce)
}

type HmacSha256 = Hmac<Sha256>;

pub fn hmac_tag(key: &[u8], message: &[u8]) -> Result<[u8; 32], CryptoError> {
    if key.is_empty() {
        return Err(CryptoError::EmptyKey);
    }
    let mut mac = <HmacSha256 as Mac>::new_from_slice(key).expect("HMAC accepts any key length");
    mac.update(message);
    Ok(mac.finalize().into_bytes().into())
}

/// Constant-time tag check.
pub fn verify_tag(key: &[u8], message: &[u8], tag: &[u8]) -> bool {
    if key.is_empty() {
        return false;
    }
    let mut mac = <HmacSha256 as Mac>::new_from_slice(key).expect("HMAC accepts any key length");
    mac.update(message);
    mac.verify_slice(tag).is_ok()
}

/// Ed25519 signature bytes.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct Signature(pub [u8; 64]);

hex_newtype_serde!(Signature, 64);

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({}..)", hex::encode(&self.0[..8]))
    }
}

pub fn sign(message: &[u8], signer: &KeyPair) -> Result<Signature, CryptoError> {
    match signer.role {
        KeyRole::IssuerSigning | KeyRole::Lkp => {
            Ok(Signature(signer.secret.signing_key().sign(message).to_bytes()))
        }
        role => Err(CryptoError::RoleCannotSign(role)),
    }
}

/// `false` for any bad or malformed signature.
pub fn verify(message: &[u8], signature: &Signature, public: &PublicKey) -> bool {
    let Some(vk) = public.verifying_key() else {
        return false;
    };
    vk.verify(message, &ed25519_dalek::Signature::from_bytes(&signature.0)).is_ok()
}
