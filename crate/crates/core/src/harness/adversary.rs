//! Adversaries. Each gets only the power its scenario grants: observe and
//! replay on the wire, tamper at rest, or act as a client using public data.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::canonical;
use crate::crypto::{seal_bound, Tick};
use crate::ledger::Did;
use crate::protocol::message::{Body, MessageKind, PossessionPayload, ProtocolMessage};
use crate::protocol::{possession_tag, ActorId, Actor, AuthMode, AuthOutcome, ChannelTap, Context, World};
use crate::storage::{parse_locators, DidDocument, StorageRef};

use super::HarnessError;

/// Captures the last message of `kind` and delivers a copy once the wire
/// goes quiet.
#[derive(Debug)]
pub struct ReplayTap {
    kind: MessageKind,
    captured: Option<ProtocolMessage>,
    replayed: bool,
}

impl ReplayTap {
    pub fn new(kind: MessageKind) -> Self {
        ReplayTap { kind, captured: None, replayed: false }
    }

    /// The final client message of an authentication in `mode`.
    pub fn for_mode(mode: AuthMode) -> Self {
        Self::new(match mode {
            AuthMode::Remote => MessageKind::ShareAndCbv,
            AuthMode::Local => MessageKind::HmacProof,
        })
    }

    pub fn replayed(&self) -> bool {
        self.replayed
    }
}

impl ChannelTap for ReplayTap {
    fn observe(&mut self, _tick: Tick, msg: &ProtocolMessage) {
        if msg.kind() == self.kind {
            self.captured = Some(msg.clone());
        }
    }

    fn on_idle(&mut self, _tick: Tick) -> Vec<ProtocolMessage> {
        if self.replayed {
            return Vec::new();
        }
        self.replayed = true;
        self.captured.clone().into_iter().collect()
    }
}

/// Records the bytes of every message on the wire.
#[derive(Debug, Default)]
pub struct RecordingTap {
    captured: Vec<Vec<u8>>,
}

impl RecordingTap {
    pub fn captured(&self) -> &[Vec<u8>] {
        &self.captured
    }

    pub fn into_captured(self) -> Vec<Vec<u8>> {
        self.captured
    }
}

impl ChannelTap for RecordingTap {
    fn observe(&mut self, _tick: Tick, msg: &ProtocolMessage) {
        self.captured.push(msg.canonical_bytes());
    }
}

/// Number of (needle, haystack) pairs where the needle appears raw or as
/// lowercase hex.
pub fn count_leaks(needles: &[Vec<u8>], haystacks: &[Vec<u8>]) -> usize {
    let forms: Vec<(Vec<u8>, Vec<u8>)> =
        needles.iter().filter(|n| !n.is_empty()).map(|n| (n.clone(), hex::encode(n).into_bytes())).collect();
    let mut hits = 0;
    for hay in haystacks {
        for (raw, hexed) in &forms {
            if contains(hay, raw) || contains(hay, hexed) {
                hits += 1;
            }
        }
    }
    hits
}

fn contains(hay: &[u8], needle: &[u8]) -> bool {
    needle.len() <= hay.len() && hay.windows(needle.len()).any(|w| w == needle)
}

/// Flips one random bit of one random byte of the stored document behind
/// `did` (first replica). Returns the reference and position.
pub fn tamper_hub<R: RngCore>(world: &mut World, did: &Did, rng: &mut R) -> Result<(StorageRef, usize), HarnessError> {
    let record = world.ledger.resolve(did).map_err(|e| HarnessError::Scenario(e.to_string()))?;
    let r = parse_locators(&record.storage_ref)
        .map_err(|e| HarnessError::Scenario(e.to_string()))?
        .remove(0);
    let hub = world.hubs.get_mut(&r.hub_id).map_err(|e| HarnessError::Scenario(e.to_string()))?;
    let bytes = hub.get_bytes(&r, None).map_err(|e| HarnessError::Scenario(e.to_string()))?;
    let position = rng.gen_range(0..bytes.len());
    let bit = rng.gen_range(0..8);
    hub.tamper(&r, position, bytes[position] ^ (1 << bit)).map_err(|e| HarnessError::Scenario(e.to_string()))?;
    Ok((r, position))
}

/// Impersonates a holder in local mode using only what the ledger and an
/// identity hub disclose: the DID, the enrollment public key, the share
/// commitment and the opaque credential.
pub struct ShareSpoofer {
    id: ActorId,
    verifier: ActorId,
    did: Did,
    doc: Option<DidDocument>,
    outcome: Option<AuthOutcome>,
    rng: ChaCha20Rng,
}

impl ShareSpoofer {
    pub fn new(id: impl Into<String>, verifier: &ActorId, did: Did, seed: u64) -> Self {
        ShareSpoofer {
            id: ActorId::new(id),
            verifier: verifier.clone(),
            did,
            doc: None,
            outcome: None,
            rng: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    pub fn outcome(&self) -> Option<&AuthOutcome> {
        self.outcome.as_ref()
    }

    /// Resolves the victim's document and opens a local-mode session.
    pub fn begin(&mut self, world: &World) -> Result<ProtocolMessage, HarnessError> {
        let record = world.ledger.resolve(&self.did).map_err(|e| HarnessError::Scenario(e.to_string()))?;
        let refs = parse_locators(&record.storage_ref).map_err(|e| HarnessError::Scenario(e.to_string()))?;
        let doc: DidDocument = refs
            .iter()
            .find_map(|r| world.hubs.get(&r.hub_id).ok()?.get_document(r, None).ok())
            .ok_or_else(|| HarnessError::Scenario("victim document unreachable".into()))?;
        let enrollment_public = doc.enrollment_public;
        self.doc = Some(doc);
        let session = crate::crypto::Nonce(self.rng.gen());
        Ok(ProtocolMessage::new(
            session,
            &self.id,
            &self.verifier,
            Body::AuthRequest { mode: AuthMode::Local, did: self.did.clone(), enrollment_public },
        ))
    }
}

impl Actor for ShareSpoofer {
    fn id(&self) -> &ActorId {
        &self.id
    }

    fn handle(&mut self, msg: ProtocolMessage, ctx: &mut Context<'_>) -> Vec<ProtocolMessage> {
        match &msg.body {
            Body::RemoteShareDelivery { challenge, server_public, credential, .. } => {
                let Some(doc) = &self.doc else { return Vec::new() };
                // The delivery is sealed to the victim's key and stays
                // closed; the tag only needs public inputs.
                let tag = possession_tag(&doc.share_commitment, None, &credential.canonical_bytes(), None);
                let proof = PossessionPayload { matched: true, tag, binding_signature: None };
                let envelope =
                    seal_bound(&canonical::to_canonical_bytes(&proof), server_public, challenge.nonce, &mut self.rng);
                ctx.notes.push("forged possession proof from public document fields".into());
                vec![msg.reply(Body::HmacProof { envelope })]
            }
            Body::AuthResult { outcome } => {
                self.outcome = Some(outcome.clone());
                Vec::new()
            }
            _ => Vec::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leak_counter_finds_raw_and_hex() {
        let needle = vec![0xABu8; 64];
        let mut planted = b"prefix".to_vec();
        planted.extend_from_slice(&needle);
        let hexed = format!("{{\"cbv\":\"{}\"}}", hex::encode(&needle)).into_bytes();
        let clean = vec![0xAB; 63];
        assert_eq!(count_leaks(std::slice::from_ref(&needle), &[planted, hexed, clean]), 2);
        assert_eq!(count_leaks(std::slice::from_ref(&needle), &[]), 0);
        assert_eq!(count_leaks(&[vec![]], &[vec![1, 2, 3]]), 0);
        let upper = hex::encode_upper(&needle).into_bytes();
        assert_eq!(count_leaks(&[needle], &[upper]), 0, "only the lowercase wire form is looked for");
    }

    #[test]
    fn replay_tap_fires_once() {
        let msg = ProtocolMessage::new(
            crate::crypto::Nonce([0; 16]),
            &ActorId::new("a"),
            &ActorId::new("b"),
            Body::Error { reason: String::new() },
        );
        let mut tap = ReplayTap::new(MessageKind::Error);
        assert!(tap.on_idle(0).is_empty(), "nothing captured");
        let mut tap2 = ReplayTap::new(MessageKind::Error);
        tap2.observe(0, &msg);
        assert_eq!(tap2.on_idle(1), vec![msg]);
        assert!(tap2.on_idle(2).is_empty());
        assert!(tap2.replayed());
        let _ = tap.replayed();
    }
}
