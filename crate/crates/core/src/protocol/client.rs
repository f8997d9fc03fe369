//! Holder device: keeps the LKP and the local share, talks to issuers and
//! verifiers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use zeroize::Zeroizing;

use crate::biometrics::{match_vectors, BiometricVector, DEFAULT_THRESHOLD};
use crate::canonical;
use crate::crypto::{self, open_envelope, seal_bound, Challenge, Envelope, Hash256, KeyPair, Nonce, PublicKey};
use crate::ledger::Did;
use crate::sharing::{self, Share, SharingScheme};

use super::message::{
    ActorId, Body, CredentialPayload, EnrollmentPayload, PossessionPayload, ProtocolMessage, RemoteMatchPayload,
    SessionId,
};
use super::{binding_statement, possession_tag, share_commitment, Actor, AuthMode, AuthOutcome, Context, ProtocolError};

#[derive(Debug, Clone, Copy)]
pub struct ClientConfig {
    pub scheme: SharingScheme,
    /// Threshold for on-device matching in local mode.
    pub threshold: f64,
    /// Seeds both the share split and session randomness.
    pub seed: u64,
}

impl Default for ClientConfig {
    fn default() -> Self {
        ClientConfig { scheme: SharingScheme::Xor, threshold: DEFAULT_THRESHOLD, seed: 0 }
    }
}

/// Splits `ibv` exactly as an enrolling client with this config does.
/// Returned shares are ordered by index; share 1 stays on the device and
/// shares 2..=k go to the issuer. Shares above k are discarded so neither
/// side alone reaches the threshold.
pub fn enrollment_shares(ibv: &BiometricVector, config: &ClientConfig) -> Result<Vec<Share>, ProtocolError> {
    config.scheme.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    Ok(sharing::split(ibv, config.scheme, &mut rng)?)
}

#[derive(Debug)]
enum Pending {
    Idle,
    Enrolling { issuer: ActorId },
    Authenticating { mode: AuthMode, bound: bool, cbv: BiometricVector },
}

pub struct ClientState {
    id: ActorId,
    device_keys: KeyPair,
    config: ClientConfig,
    ibv: Option<BiometricVector>,
    local_shares: Vec<Share>,
    outgoing_shares: Vec<Share>,
    did: Option<Did>,
    enrolled_server_public: Option<PublicKey>,
    pending: Pending,
    last_outcome: Option<AuthOutcome>,
    last_error: Option<String>,
    rng: ChaCha20Rng,
}

impl std::fmt::Debug for ClientState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ClientState")
            .field("id", &self.id)
            .field("did", &self.did)
            .field("holds_ibv", &self.ibv.is_some())
            .field("local_shares", &self.local_shares.len())
            .finish_non_exhaustive()
    }
}

impl ClientState {
    pub fn new(
        id: impl Into<String>,
        device_keys: KeyPair,
        ibv: BiometricVector,
        config: ClientConfig,
    ) -> Result<Self, ProtocolError> {
        let mut shares = enrollment_shares(&ibv, &config)?;
        let k = usize::from(config.scheme.threshold());
        shares.truncate(k);
        let outgoing_shares = shares.split_off(1);
        let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
        rng.set_stream(1);
        Ok(ClientState {
            id: ActorId::new(id),
            device_keys,
            config,
            ibv: Some(ibv),
            local_shares: shares,
            outgoing_shares,
            did: None,
            enrolled_server_public: None,
            pending: Pending::Idle,
            last_outcome: None,
            last_error: None,
            rng,
        })
    }

    pub fn id(&self) -> &ActorId {
        &self.id
    }

    pub fn public(&self) -> &PublicKey {
        self.device_keys.public()
    }

    pub fn did(&self) -> Option<&Did> {
        self.did.as_ref()
    }

    pub fn enrolled_server_public(&self) -> Option<&PublicKey> {
        self.enrolled_server_public.as_ref()
    }

    /// Whether the enrollment template is still in memory. It is wiped
    /// once enrollment succeeds.
    pub fn holds_ibv(&self) -> bool {
        self.ibv.is_some()
    }

    pub fn local_share_count(&self) -> usize {
        self.local_shares.len()
    }

    pub fn share_commitment(&self) -> Hash256 {
        share_commitment(&self.local_shares, self.device_keys.public())
    }

    pub fn last_outcome(&self) -> Option<&AuthOutcome> {
        self.last_outcome.as_ref()
    }

    pub fn last_error(&self) -> Option<&str> {
        self.last_error.as_deref()
    }

    fn new_session(&mut self) -> SessionId {
        Nonce(self.rng.gen())
    }

    pub fn begin_enroll(&mut self, issuer: &ActorId) -> Result<ProtocolMessage, ProtocolError> {
        if self.ibv.is_none() {
            return Err(ProtocolError::Enrollment("already enrolled".into()));
        }
        self.pending = Pending::Enrolling { issuer: issuer.clone() };
        self.last_error = None;
        let session = self.new_session();
        Ok(ProtocolMessage::new(session, &self.id, issuer, Body::EnrollRequest {}))
    }

    /// Starts an authentication with `cbv`. `bound` selects the
    /// challenge-bound possession proof in local mode.
    pub fn begin_auth(
        &mut self,
        verifier: &ActorId,
        mode: AuthMode,
        cbv: BiometricVector,
        bound: bool,
    ) -> Result<ProtocolMessage, ProtocolError> {
        let did = self.did.clone().ok_or(ProtocolError::NotEnrolled)?;
        self.pending = Pending::Authenticating { mode, bound, cbv };
        self.last_outcome = None;
        let session = self.new_session();
        Ok(ProtocolMessage::new(
            session,
            &self.id,
            verifier,
            Body::AuthRequest { mode, did, enrollment_public: *self.device_keys.public() },
        ))
    }

    /// Expiry is the server's call; the device seals whatever it was given.
    fn seal(&mut self, plain: &[u8], to: &PublicKey, challenge: &Challenge) -> Envelope {
        seal_bound(plain, to, challenge.nonce, &mut self.rng)
    }

    fn on_enroll_grant(
        &mut self,
        msg: &ProtocolMessage,
        challenge: &Challenge,
        server_public: &PublicKey,
    ) -> Option<ProtocolMessage> {
        let payload = Zeroizing::new(canonical::to_canonical_bytes(&EnrollmentPayload {
            enrollment_public: *self.device_keys.public(),
            shares: self.outgoing_shares.clone(),
            share_commitment: self.share_commitment(),
        }));
        let envelope = self.seal(&payload, server_public, challenge);
        self.enrolled_server_public = Some(*server_public);
        Some(msg.reply(Body::EnrollShare { envelope }))
    }

    fn on_enroll_result(&mut self, did: Option<&Did>, error: Option<&str>) {
        match did {
            Some(did) => {
                self.did = Some(did.clone());
                // Dropping wipes the template and the shares that left.
                self.ibv = None;
                self.outgoing_shares.clear();
            }
            None => self.last_error = Some(error.unwrap_or("enrollment rejected").to_string()),
        }
    }

    fn on_remote_grant(
        &mut self,
        msg: &ProtocolMessage,
        challenge: &Challenge,
        server_public: &PublicKey,
        cbv: &BiometricVector,
    ) -> Option<ProtocolMessage> {
        let payload = Zeroizing::new(canonical::to_canonical_bytes(&RemoteMatchPayload {
            shares: self.local_shares.clone(),
            cbv: cbv.clone(),
        }));
        let envelope = self.seal(&payload, server_public, challenge);
        Some(msg.reply(Body::ShareAndCbv { envelope }))
    }

    /// Local mode: reconstructs on the device, matches, proves possession.
    /// The delivered share and the reconstruction are wiped on return.
    fn on_delivery(
        &mut self,
        msg: &ProtocolMessage,
        delivery: (&Challenge, &PublicKey, &Envelope, &Envelope),
        cbv: &BiometricVector,
        bound: bool,
    ) -> Option<ProtocolMessage> {
        let (challenge, server_public, sealed, credential) = delivery;
        let matched = match open_envelope(sealed, &self.device_keys, challenge) {
            Ok(plain) => match serde_json::from_slice::<CredentialPayload>(&plain) {
                Ok(payload) => {
                    let mut shares = self.local_shares.clone();
                    shares.extend(payload.shares.iter().cloned());
                    sharing::combine(&shares)
                        .ok()
                        .and_then(|reference| match_vectors(&reference, cbv, self.config.threshold).ok())
                        .is_some_and(|m| m.accepted)
                }
                Err(_) => false,
            },
            Err(e) => {
                self.last_error = Some(e.to_string());
                false
            }
        };
        let credential = credential.canonical_bytes();
        let commitment = self.share_commitment();
        let (tag, binding_signature) = if bound {
            let sig = crypto::sign(&binding_statement(&challenge.nonce, &credential), &self.device_keys)
                .expect("LKP can sign");
            (possession_tag(&commitment, Some(&sig), &credential, Some(&challenge.nonce)), Some(sig))
        } else {
            (possession_tag(&commitment, None, &credential, None), None)
        };
        let proof = PossessionPayload { matched, tag, binding_signature };
        let envelope = self.seal(&canonical::to_canonical_bytes(&proof), server_public, challenge);
        Some(msg.reply(Body::HmacProof { envelope }))
    }
}

impl Actor for ClientState {
    fn id(&self) -> &ActorId {
        &self.id
    }

    fn handle(&mut self, msg: ProtocolMessage, ctx: &mut Context<'_>) -> Vec<ProtocolMessage> {
        let pending = std::mem::replace(&mut self.pending, Pending::Idle);
        let (reply, keep) = match (&msg.body, &pending) {
            (Body::ChallengeGrant { challenge, server_public }, Pending::Enrolling { issuer })
                if *issuer == msg.sender =>
            {
                (self.on_enroll_grant(&msg, challenge, server_public), true)
            }
            (Body::EnrollResult { did, error }, Pending::Enrolling { .. }) => {
                self.on_enroll_result(did.as_ref(), error.as_deref());
                (None, false)
            }
            (Body::ChallengeGrant { challenge, server_public }, Pending::Authenticating { mode, cbv, .. })
                if *mode == AuthMode::Remote =>
            {
                (self.on_remote_grant(&msg, challenge, server_public, cbv), true)
            }
            (
                Body::RemoteShareDelivery { challenge, server_public, delivery, credential },
                Pending::Authenticating { mode, cbv, bound },
            ) if *mode == AuthMode::Local => {
                let reply =
                    self.on_delivery(&msg, (challenge, server_public, delivery, credential), cbv, *bound);
                (reply, true)
            }
            (Body::AuthResult { outcome }, _) => {
                self.last_outcome = Some(outcome.clone());
                (None, false)
            }
            (Body::Error { reason }, _) => {
                self.last_error = Some(reason.clone());
                (None, false)
            }
            _ => {
                ctx.notes.push(format!("ignored unexpected {:?}", msg.kind()));
                (None, true)
            }
        };
        if keep {
            self.pending = pending;
        }
        reply.into_iter().collect()
    }
}
