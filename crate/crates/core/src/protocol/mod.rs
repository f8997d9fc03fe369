//! Actors and message flows for enrollment and for remote and local
//! authentication.
//!
//! Every flow runs over a [`Wire`]: the client sends the first message, the
//! server answers, and so on until the session closes. Actors share nothing
//! but the [`World`] (ledger plus hubs), which stands in for the public
//! blockchain and the off-chain storage providers.

pub mod bops;
mod client;
mod flows;
pub mod message;
mod server;
pub mod wire;

pub use client::{enrollment_shares, ClientConfig, ClientState};
pub use flows::{authenticate, authenticate_local, authenticate_remote, enroll, enroll_observed};
pub use message::{ActorId, Body, MessageKind, ProtocolMessage, SessionId};
pub use server::{Decision, ServerConfig, ServerState, CHALLENGE_GC_GRACE};
pub use wire::{ChannelTap, Direction, Event, Passive, Wire, WireError, DEFAULT_TICK_BUDGET};

use serde::{Deserialize, Serialize};

use crate::crypto::{self, digest, digest_parts, CryptoError, Hash256, Nonce, PublicKey, Signature, Tick};
use crate::ledger::{Did, Ledger, LedgerError, LedgerRecord};
use crate::sharing::{Share, SharingError};
use crate::storage::{parse_locators, DidDocument, HubRegistry, StorageError, StorageRef};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AuthMode {
    Remote,
    Local,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FailureReason {
    BiometricMismatch,
    TamperDetected,
    UnknownIssuer,
    KeyMismatch,
    Replay,
    ChallengeExpired,
    SpoofDetected,
    /// The DID is not on the ledger or no replica of its document could be
    /// fetched.
    UnresolvedDid,
}

impl FailureReason {
    /// Whether this outcome means someone interfered with the system, as
    /// opposed to a plain rejection.
    pub fn is_security_violation(self) -> bool {
        !matches!(self, FailureReason::BiometricMismatch | FailureReason::UnresolvedDid)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuthOutcome {
    pub accepted: bool,
    pub mode: AuthMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_reason: Option<FailureReason>,
}

impl AuthOutcome {
    pub fn accepted(mode: AuthMode) -> Self {
        AuthOutcome { accepted: true, mode, failure_reason: None }
    }

    pub fn rejected(mode: AuthMode, reason: FailureReason) -> Self {
        AuthOutcome { accepted: false, mode, failure_reason: Some(reason) }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ProtocolError {
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Sharing(#[from] SharingError),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error("enrollment failed: {0}")]
    Enrollment(String),
    #[error("client is not enrolled")]
    NotEnrolled,
    #[error("flow ended without a verdict")]
    NoVerdict,
}

/// Shared state every actor can reach: the public ledger and the hubs.
#[derive(Debug, Default)]
pub struct World {
    pub ledger: Ledger,
    pub hubs: HubRegistry,
}

impl World {
    pub fn new(ledger: Ledger, hubs: HubRegistry) -> Self {
        World { ledger, hubs }
    }
}

/// Per-delivery view handed to an actor.
pub struct Context<'a> {
    pub now: Tick,
    pub world: &'a mut World,
    /// Free-text transcript notes emitted while handling the message.
    pub notes: Vec<String>,
}

pub trait Actor {
    fn id(&self) -> &ActorId;
    fn handle(&mut self, msg: ProtocolMessage, ctx: &mut Context<'_>) -> Vec<ProtocolMessage>;
}

const CREDENTIAL_LABEL: &[u8] = b"horcrux/credential";
const POSSESSION_LABEL: &[u8] = b"horcrux/possession";

/// Binding value sealed into a document's `auth_credential`. Ties the
/// credential to one enrollment key so it cannot be moved to another
/// document.
pub fn credential_binding(enrollment_public: &PublicKey) -> Nonce {
    let d = digest_parts(&[CREDENTIAL_LABEL, enrollment_public.as_bytes()]);
    let mut n = [0u8; 16];
    n.copy_from_slice(&d.as_bytes()[..16]);
    Nonce(n)
}

/// digest(local share payloads || enrollment public key), registered in the
/// DID document at enrollment.
pub fn share_commitment(local_shares: &[Share], enrollment_public: &PublicKey) -> Hash256 {
    let mut parts: Vec<&[u8]> = local_shares.iter().map(Share::payload).collect();
    parts.push(enrollment_public.as_bytes());
    digest_parts(&parts)
}

/// What the device signs with its LKP in mitigated local mode.
pub fn binding_statement(challenge: &Nonce, credential: &[u8]) -> Vec<u8> {
    [POSSESSION_LABEL, challenge.as_bytes(), digest(credential).as_bytes()].concat()
}

/// HMAC key for the possession tag. Without a signature it is the share
/// commitment itself, which anyone who can read the document knows.
pub fn possession_key(commitment: &Hash256, binding_signature: Option<&Signature>) -> Hash256 {
    match binding_signature {
        None => *commitment,
        Some(sig) => digest_parts(&[&sig.0, commitment.as_bytes()]),
    }
}

/// HMAC message: the opaque credential, plus the challenge nonce when the
/// tag is challenge-bound.
pub fn possession_message(credential: &[u8], challenge: Option<&Nonce>) -> Vec<u8> {
    match challenge {
        None => credential.to_vec(),
        Some(n) => [credential, n.as_bytes()].concat(),
    }
}

pub fn possession_tag(
    commitment: &Hash256,
    binding_signature: Option<&Signature>,
    credential: &[u8],
    challenge: Option<&Nonce>,
) -> Hash256 {
    let key = possession_key(commitment, binding_signature);
    let tag = crypto::hmac_tag(key.as_bytes(), &possession_message(credential, challenge))
        .expect("32-byte key is never empty");
    Hash256(tag)
}

/// Resolves `did`, checks the fetched document against the ledger digest,
/// its issuer signature and issuer, and that it belongs to
/// `presented_key`. Replicas are tried in order.
pub fn verify_claim(
    server: &ServerState,
    did: &Did,
    presented_key: &PublicKey,
    world: &World,
) -> Result<DidDocument, FailureReason> {
    let record = world.ledger.resolve(did).map_err(|_| FailureReason::UnresolvedDid)?;
    let refs = parse_locators(&record.storage_ref).map_err(|_| FailureReason::TamperDetected)?;
    let mut saw_mismatch = false;
    let mut bytes = None;
    for r in &refs {
        match world.hubs.fetch(r, server.hub_token(&r.hub_id)) {
            Ok(b) if digest(&b) == record.doc_digest => {
                bytes = Some(b);
                break;
            }
            Ok(_) => saw_mismatch = true,
            Err(_) => {}
        }
    }
    let Some(bytes) = bytes else {
        return Err(if saw_mismatch { FailureReason::TamperDetected } else { FailureReason::UnresolvedDid });
    };
    let mut doc: DidDocument =
        crate::canonical::from_canonical_bytes(&bytes).map_err(|_| FailureReason::TamperDetected)?;
    if !doc.verify_signature() {
        return Err(FailureReason::TamperDetected);
    }
    if !server.known_issuers().contains(&doc.issuer_public) {
        return Err(FailureReason::UnknownIssuer);
    }
    if doc.enrollment_public != *presented_key || record.owner_public != *presented_key {
        return Err(FailureReason::KeyMismatch);
    }
    doc.did = Some(did.clone());
    Ok(doc)
}

/// Stores `doc` on every hub in `hub_ids`, then registers it. A failed write
/// or registration leaves no ledger record and removes the objects this call
/// created.
pub fn publish_document(
    world: &mut World,
    doc: &DidDocument,
    hub_ids: &[String],
) -> Result<(Did, LedgerRecord), ProtocolError> {
    if hub_ids.is_empty() {
        return Err(ProtocolError::Enrollment("no enrollment hub configured".into()));
    }
    let mut created: Vec<StorageRef> = Vec::new();
    let mut refs = Vec::new();
    let result = (|| {
        for id in hub_ids {
            let hub = world.hubs.get_mut(id)?;
            let r = StorageRef { hub_id: id.clone(), object_key: doc.digest().to_hex() };
            let existed = hub.contains(&r)?;
            let r = hub.put_document(doc)?;
            if !existed {
                created.push(r.clone());
            }
            refs.push(r);
        }
        Ok::<_, ProtocolError>(())
    })();
    let result = result.and_then(|()| {
        world
            .ledger
            .register_did(doc.digest(), doc.enrollment_public, crate::storage::join_locators(&refs))
            .map_err(ProtocolError::from)
    });
    if result.is_err() {
        for r in &created {
            if let Ok(hub) = world.hubs.get_mut(&r.hub_id) {
                let _ = hub.delete(r);
            }
        }
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{generate_keypair, KeyRole};
    use crate::storage::{MemoryHub, ServiceEndpoint, UnsignedDocument};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn document(seed: u64) -> DidDocument {
        let issuer = generate_keypair(KeyRole::IssuerSigning, seed);
        let device = generate_keypair(KeyRole::Lkp, seed + 1);
        let rkp = generate_keypair(KeyRole::Rkp, seed + 2);
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let credential =
            crypto::seal_bound(b"share", rkp.public(), credential_binding(device.public()), &mut rng);
        DidDocument::issue(
            UnsignedDocument {
                issuer_public: *issuer.public(),
                enrollment_public: *device.public(),
                auth_credential: credential,
                share_commitment: Hash256([7; 32]),
                service_endpoints: vec![ServiceEndpoint::new("hub", "hub://a")],
            },
            &issuer,
        )
        .unwrap()
    }

    fn world(hubs: Vec<MemoryHub>) -> World {
        let mut reg = HubRegistry::new();
        for h in hubs {
            reg.add(h);
        }
        World::new(Ledger::new(), reg)
    }

    #[test]
    fn publish_failing_hub_leaves_nothing() {
        let mut w = world(vec![MemoryHub::new("a"), MemoryHub::failing("b")]);
        let doc = document(1);
        let err = publish_document(&mut w, &doc, &["a".into(), "b".into()]);
        assert!(matches!(err, Err(ProtocolError::Storage(StorageError::WriteFailed(_)))));
        assert!(w.ledger.is_empty());
        assert!(w.hubs.all_objects().unwrap().is_empty(), "compensation removes the first replica");
    }

    #[test]
    fn publish_duplicate_keeps_original_objects() {
        let mut w = world(vec![MemoryHub::new("a")]);
        let doc = document(2);
        publish_document(&mut w, &doc, &["a".into()]).unwrap();
        assert!(matches!(
            publish_document(&mut w, &doc, &["a".into()]),
            Err(ProtocolError::Ledger(LedgerError::AlreadyRegistered(_)))
        ));
        assert_eq!(w.ledger.len(), 1);
        assert_eq!(w.hubs.all_objects().unwrap().len(), 1);
    }

    #[test]
    fn verify_claim_checks_in_order() {
        let mut w = world(vec![MemoryHub::new("a")]);
        let doc = document(3);
        let (did, record) = publish_document(&mut w, &doc, &["a".into()]).unwrap();
        assert_eq!(record.doc_digest, digest(&w.hubs.all_objects().unwrap()[0].1));

        let rkp = generate_keypair(KeyRole::Rkp, 99);
        let mut server = ServerState::new("v", rkp, ServerConfig::default(), 0);
        assert_eq!(verify_claim(&server, &did, &doc.enrollment_public, &w), Err(FailureReason::UnknownIssuer));
        server.trust_issuer(doc.issuer_public);
        let resolved = verify_claim(&server, &did, &doc.enrollment_public, &w).unwrap();
        assert_eq!(resolved.did.as_ref(), Some(&did));
        let other = generate_keypair(KeyRole::Lkp, 50);
        assert_eq!(verify_claim(&server, &did, other.public(), &w), Err(FailureReason::KeyMismatch));

        let missing = Did::from_document_digest(&Hash256([1; 32]));
        assert_eq!(verify_claim(&server, &missing, &doc.enrollment_public, &w), Err(FailureReason::UnresolvedDid));

        let r: StorageRef = record.storage_ref.parse().unwrap();
        w.hubs.get_mut("a").unwrap().tamper(&r, 10, b'x').unwrap();
        assert_eq!(verify_claim(&server, &did, &doc.enrollment_public, &w), Err(FailureReason::TamperDetected));
    }

    #[test]
    fn replica_fallback_after_tamper() {
        let mut w = world(vec![MemoryHub::new("a"), MemoryHub::new("b")]);
        let doc = document(4);
        let (did, record) = publish_document(&mut w, &doc, &["a".into(), "b".into()]).unwrap();
        let refs = parse_locators(&record.storage_ref).unwrap();
        assert_eq!(refs.len(), 2);
        w.hubs.get_mut("a").unwrap().tamper(&refs[0], 0, b' ').unwrap();
        let mut server = ServerState::new("v", generate_keypair(KeyRole::Rkp, 5), ServerConfig::default(), 0);
        server.trust_issuer(doc.issuer_public);
        assert!(verify_claim(&server, &did, &doc.enrollment_public, &w).is_ok());
        w.hubs.get_mut("b").unwrap().delete(&refs[1]).unwrap();
        assert_eq!(verify_claim(&server, &did, &doc.enrollment_public, &w), Err(FailureReason::TamperDetected));
    }

    #[test]
    fn possession_tag_depends_on_signature_and_nonce() {
        let c = Hash256([3; 32]);
        let sig = Signature([4; 64]);
        let n = Nonce([5; 16]);
        let plain = possession_tag(&c, None, b"cred", None);
        assert_eq!(plain, Hash256(crypto::hmac_tag(&c.0, b"cred").unwrap()));
        assert_ne!(plain, possession_tag(&c, Some(&sig), b"cred", Some(&n)));
        assert_ne!(possession_tag(&c, Some(&sig), b"cred", Some(&n)), possession_tag(&c, Some(&sig), b"cred", None));
    }

    #[test]
    fn outcome_serialization() {
        let ok = AuthOutcome::accepted(AuthMode::Remote);
        assert_eq!(crate::canonical::to_canonical_string(&ok), r#"{"accepted":true,"mode":"Remote"}"#);
        let bad = AuthOutcome::rejected(AuthMode::Local, FailureReason::SpoofDetected);
        assert_eq!(
            crate::canonical::to_canonical_string(&bad),
            r#"{"accepted":false,"failure_reason":"SpoofDetected","mode":"Local"}"#
        );
    }
}
