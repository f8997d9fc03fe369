use std::fmt;

use serde::{Deserialize, Serialize};

use crate::biometrics::BiometricVector;
use crate::canonical;
use crate::crypto::{Challenge, Envelope, Hash256, Nonce, PublicKey, Signature};
use crate::ledger::Did;
use crate::sharing::Share;

use super::{AuthMode, AuthOutcome};

/// 16-byte flow identifier, constant across every message of one flow.
pub type SessionId = Nonce;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActorId(pub String);

impl ActorId {
    pub fn new(id: impl Into<String>) -> Self {
        ActorId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ActorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MessageKind {
    EnrollRequest,
    EnrollShare,
    EnrollResult,
    AuthRequest,
    ChallengeGrant,
    ShareAndCbv,
    RemoteShareDelivery,
    HmacProof,
    AuthResult,
    Error,
}

/// Kind-specific message body. Every share or template travels inside an
/// [`Envelope`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "body", deny_unknown_fields)]
pub enum Body {
    /// Client asks an issuer to enroll it.
    EnrollRequest {},
    /// Server hands out a one-time challenge and its RKP public key.
    ChallengeGrant { challenge: Challenge, server_public: PublicKey },
    /// Sealed [`EnrollmentPayload`].
    EnrollShare { envelope: Envelope },
    EnrollResult {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        did: Option<Did>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        error: Option<String>,
    },
    /// Presents a DID claim plus the enrollment public key to a verifier.
    AuthRequest { mode: AuthMode, did: Did, enrollment_public: PublicKey },
    /// Sealed [`RemoteMatchPayload`].
    ShareAndCbv { envelope: Envelope },
    /// Local mode: the remote share(s) resealed to the device, plus the
    /// opaque credential copied from the DID document.
    RemoteShareDelivery {
        challenge: Challenge,
        server_public: PublicKey,
        delivery: Envelope,
        credential: Envelope,
    },
    /// Sealed [`PossessionPayload`].
    HmacProof { envelope: Envelope },
    AuthResult { outcome: AuthOutcome },
    Error { reason: String },
}

impl Body {
    pub fn kind(&self) -> MessageKind {
        match self {
            Body::EnrollRequest {} => MessageKind::EnrollRequest,
            Body::ChallengeGrant { .. } => MessageKind::ChallengeGrant,
            Body::EnrollShare { .. } => MessageKind::EnrollShare,
            Body::EnrollResult { .. } => MessageKind::EnrollResult,
            Body::AuthRequest { .. } => MessageKind::AuthRequest,
            Body::ShareAndCbv { .. } => MessageKind::ShareAndCbv,
            Body::RemoteShareDelivery { .. } => MessageKind::RemoteShareDelivery,
            Body::HmacProof { .. } => MessageKind::HmacProof,
            Body::AuthResult { .. } => MessageKind::AuthResult,
            Body::Error { .. } => MessageKind::Error,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolMessage {
    pub session_id: SessionId,
    pub sender: ActorId,
    pub recipient: ActorId,
    #[serde(flatten)]
    pub body: Body,
}

impl ProtocolMessage {
    pub fn new(session_id: SessionId, sender: &ActorId, recipient: &ActorId, body: Body) -> Self {
        ProtocolMessage { session_id, sender: sender.clone(), recipient: recipient.clone(), body }
    }

    pub fn kind(&self) -> MessageKind {
        self.body.kind()
    }

    /// Reply in the same session, addressed back to the sender.
    pub fn reply(&self, body: Body) -> Self {
        ProtocolMessage {
            session_id: self.session_id,
            sender: self.recipient.clone(),
            recipient: self.sender.clone(),
            body,
        }
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        canonical::to_canonical_bytes(self)
    }
}

/// Plaintext of `EnrollShare`.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnrollmentPayload {
    pub enrollment_public: PublicKey,
    pub shares: Vec<Share>,
    pub share_commitment: Hash256,
}

/// Plaintext of a DID document's `auth_credential` and of local-mode share
/// deliveries.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CredentialPayload {
    pub shares: Vec<Share>,
}

/// Plaintext of `ShareAndCbv`.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteMatchPayload {
    pub shares: Vec<Share>,
    pub cbv: BiometricVector,
}

/// Plaintext of `HmacProof`: the device's local verdict plus proof that it
/// holds the enrolled share.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PossessionPayload {
    pub matched: bool,
    pub tag: Hash256,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub binding_signature: Option<Signature>,
}
