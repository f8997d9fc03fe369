//! The four BOPS configuration modes and the two that involve no DID.
//!
//! `LocalMatch` and `RemoteMatch` are the DID-backed flows run by
//! [`ClientState`](super::ClientState) and [`ServerState`](super::ServerState).
//! `Local` (everything on the device, the server only sees a signed verdict)
//! and `Remote` (the whole template lives on the server) are degenerate
//! single-party flows kept here for completeness.

use rand::RngCore;
use serde::{Deserialize, Serialize};
use zeroize::Zeroizing;

use crate::biometrics::{match_vectors, BiometricError, BiometricVector, MatchResult};
use crate::canonical;
use crate::crypto::{self, open_envelope, seal_envelope, Challenge, Envelope, KeyPair, PublicKey, Signature, Tick};

use super::AuthMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BopsMode {
    Local,
    Remote,
    LocalMatch,
    RemoteMatch,
}

impl BopsMode {
    pub const ALL: [BopsMode; 4] = [BopsMode::Local, BopsMode::Remote, BopsMode::LocalMatch, BopsMode::RemoteMatch];

    /// Whether the mode stores shares behind a DID.
    pub fn uses_did(self) -> bool {
        matches!(self, BopsMode::LocalMatch | BopsMode::RemoteMatch)
    }
}

impl From<AuthMode> for BopsMode {
    fn from(mode: AuthMode) -> Self {
        match mode {
            AuthMode::Local => BopsMode::LocalMatch,
            AuthMode::Remote => BopsMode::RemoteMatch,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BopsError {
    #[error(transparent)]
    Biometric(#[from] BiometricError),
    #[error(transparent)]
    Crypto(#[from] crypto::CryptoError),
    #[error("envelope rejected: {0}")]
    Envelope(#[from] crypto::EnvelopeError),
    #[error("malformed probe")]
    Malformed,
}

/// Signed on-device verdict for `Local` mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Attestation {
    pub challenge: Challenge,
    pub accepted: bool,
    pub signature: Signature,
}

fn attestation_bytes(challenge: &Challenge, accepted: bool) -> Vec<u8> {
    [b"horcrux/bops-local".as_slice(), challenge.nonce.as_bytes(), &[u8::from(accepted)]].concat()
}

/// Pure on-device authenticator. The template never leaves it.
pub struct LocalAuthenticator {
    device_keys: KeyPair,
    reference: BiometricVector,
    threshold: f64,
}

impl LocalAuthenticator {
    pub fn new(device_keys: KeyPair, reference: BiometricVector, threshold: f64) -> Self {
        LocalAuthenticator { device_keys, reference, threshold }
    }

    pub fn public(&self) -> &PublicKey {
        self.device_keys.public()
    }

    pub fn attest(&self, cbv: &BiometricVector, challenge: &Challenge) -> Result<Attestation, BopsError> {
        let accepted = match_vectors(&self.reference, cbv, self.threshold)?.accepted;
        let signature = crypto::sign(&attestation_bytes(challenge, accepted), &self.device_keys)?;
        Ok(Attestation { challenge: challenge.clone(), accepted, signature })
    }
}

/// Server side of `Local` mode: accepts iff the verdict is positive,
/// signed by the registered device key, and for a live challenge.
pub fn verify_attestation(att: &Attestation, device_public: &PublicKey, issued: &Challenge, now: Tick) -> bool {
    att.challenge.nonce == issued.nonce
        && issued.check_usable(now).is_ok()
        && crypto::verify(&attestation_bytes(issued, att.accepted), &att.signature, device_public)
        && att.accepted
}

/// `Remote` mode server: keeps the whole enrollment template.
pub struct RemoteMatcher {
    server_keys: KeyPair,
    reference: BiometricVector,
    threshold: f64,
}

impl RemoteMatcher {
    pub fn new(server_keys: KeyPair, reference: BiometricVector, threshold: f64) -> Self {
        RemoteMatcher { server_keys, reference, threshold }
    }

    pub fn public(&self) -> &PublicKey {
        self.server_keys.public()
    }

    pub fn match_sealed(&self, probe: &Envelope, challenge: &Challenge) -> Result<MatchResult, BopsError> {
        let plain = open_envelope(probe, &self.server_keys, challenge)?;
        let cbv: BiometricVector = serde_json::from_slice(&plain).map_err(|_| BopsError::Malformed)?;
        Ok(match_vectors(&self.reference, &cbv, self.threshold)?)
    }
}

/// Device side of `Remote` mode.
pub fn seal_probe<R: RngCore + ?Sized>(
    cbv: &BiometricVector,
    server: &PublicKey,
    challenge: &Challenge,
    now: Tick,
    rng: &mut R,
) -> Result<Envelope, BopsError> {
    let plain = Zeroizing::new(canonical::to_canonical_bytes(cbv));
    Ok(seal_envelope(&plain, server, challenge, now, rng)?)
}
