//! One-call drivers for the three flows. Each runs a fresh exchange on the
//! given wire until the network is quiet.

use crate::biometrics::BiometricVector;
use crate::ledger::Did;

use super::wire::{ChannelTap, Passive, Wire};
use super::{Actor, AuthMode, AuthOutcome, ClientState, ProtocolError, ServerState, World};

/// Enrolls `client` with `issuer`; on success the client holds its DID and
/// no longer holds its template.
pub fn enroll(
    client: &mut ClientState,
    issuer: &mut ServerState,
    wire: &mut Wire,
    world: &mut World,
) -> Result<Did, ProtocolError> {
    enroll_observed(client, issuer, wire, world, &mut Passive)
}

/// [`enroll`] with a tap on the wire.
pub fn enroll_observed(
    client: &mut ClientState,
    issuer: &mut ServerState,
    wire: &mut Wire,
    world: &mut World,
    tap: &mut dyn ChannelTap,
) -> Result<Did, ProtocolError> {
    let first = client.begin_enroll(issuer.id())?;
    wire.run(&mut [client as &mut dyn Actor, issuer], world, vec![first], tap)?;
    match client.did() {
        Some(did) if !client.holds_ibv() => Ok(did.clone()),
        _ => Err(ProtocolError::Enrollment(client.last_error().unwrap_or("no result").to_string())),
    }
}

/// Runs one authentication and returns the verifier's verdict for it.
/// `bound` selects the challenge-bound possession proof on both sides
/// (local mode only).
#[allow(clippy::too_many_arguments)]
pub fn authenticate(
    client: &mut ClientState,
    verifier: &mut ServerState,
    mode: AuthMode,
    cbv: BiometricVector,
    bound: bool,
    wire: &mut Wire,
    world: &mut World,
    tap: &mut dyn ChannelTap,
) -> Result<AuthOutcome, ProtocolError> {
    verifier.config_mut().require_bound_possession = bound;
    let first = client.begin_auth(verifier.id(), mode, cbv, bound)?;
    let session = first.session_id;
    wire.run(&mut [client as &mut dyn Actor, verifier], world, vec![first], tap)?;
    verifier.decision_for(&session).cloned().ok_or(ProtocolError::NoVerdict)
}

pub fn authenticate_remote(
    client: &mut ClientState,
    verifier: &mut ServerState,
    cbv: BiometricVector,
    wire: &mut Wire,
    world: &mut World,
) -> Result<AuthOutcome, ProtocolError> {
    authenticate(client, verifier, AuthMode::Remote, cbv, false, wire, world, &mut Passive)
}

pub fn authenticate_local(
    client: &mut ClientState,
    verifier: &mut ServerState,
    cbv: BiometricVector,
    mitigation: bool,
    wire: &mut Wire,
    world: &mut World,
) -> Result<AuthOutcome, ProtocolError> {
    authenticate(client, verifier, AuthMode::Local, cbv, mitigation, wire, world, &mut Passive)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::biometrics::{derive_cbv, generate_ibv, BiometricVector, GENUINE_FLIP_PROB};
    use crate::crypto::{generate_keypair, KeyRole, Nonce};
    use crate::ledger::Ledger;
    use crate::protocol::message::{Body, MessageKind, ProtocolMessage};
    use crate::protocol::{ClientConfig, FailureReason, ServerConfig};
    use crate::sharing::SharingScheme;
    use crate::storage::{HubRegistry, MemoryHub, StorageRef};

    struct Setup {
        world: World,
        wire: Wire,
        client: ClientState,
        issuer: ServerState,
        verifier: ServerState,
        ibv: BiometricVector,
        did: Did,
    }

    fn setup_with(seed: u64, scheme: SharingScheme, config: ServerConfig) -> Setup {
        let mut hubs = HubRegistry::new();
        hubs.add(MemoryHub::new("hub-1"));
        let mut world = World::new(Ledger::new(), hubs);
        let mut wire = Wire::default();
        let ibv = generate_ibv(seed, 512).unwrap();
        let rkp = generate_keypair(KeyRole::Rkp, seed + 1);
        let mut issuer = ServerState::new("issuer", rkp.clone(), config.clone(), seed + 2)
            .with_signing_keys(generate_keypair(KeyRole::IssuerSigning, seed + 3));
        let mut client = ClientState::new(
            "client",
            generate_keypair(KeyRole::Lkp, seed + 4),
            ibv.clone(),
            ClientConfig { scheme, seed: seed + 5, ..ClientConfig::default() },
        )
        .unwrap();
        let did = enroll(&mut client, &mut issuer, &mut wire, &mut world).unwrap();
        let mut verifier = ServerState::new("verifier", generate_keypair(KeyRole::Rkp, seed + 6), config, seed + 7);
        verifier.trust_issuer(*issuer.signing_public().unwrap());
        verifier.add_credential_key(rkp);
        Setup { world, wire, client, issuer, verifier, ibv, did }
    }

    fn setup(seed: u64) -> Setup {
        setup_with(seed, SharingScheme::Xor, ServerConfig::default())
    }

    fn genuine(s: &Setup, seed: u64) -> BiometricVector {
        derive_cbv(&s.ibv, GENUINE_FLIP_PROB, seed).unwrap()
    }

    #[test]
    fn enrollment_registers_hub_digest_and_wipes_ibv() {
        let s = setup(10);
        assert!(!s.client.holds_ibv());
        assert_eq!(s.client.local_share_count(), 1);
        let record = s.world.ledger.resolve(&s.did).unwrap();
        let r: StorageRef = record.storage_ref.parse().unwrap();
        let bytes = s.world.hubs.fetch(&r, None).unwrap();
        assert_eq!(crate::crypto::digest(&bytes), record.doc_digest);
        assert_eq!(s.issuer.enrolled(), std::slice::from_ref(&s.did));
    }

    #[test]
    fn failing_hub_aborts_enrollment_without_ledger_record() {
        let mut hubs = HubRegistry::new();
        hubs.add(MemoryHub::failing("hub-1"));
        let mut world = World::new(Ledger::new(), hubs);
        let mut issuer = ServerState::new("issuer", generate_keypair(KeyRole::Rkp, 1), ServerConfig::default(), 2)
            .with_signing_keys(generate_keypair(KeyRole::IssuerSigning, 3));
        let mut client = ClientState::new(
            "client",
            generate_keypair(KeyRole::Lkp, 4),
            generate_ibv(5, 512).unwrap(),
            ClientConfig::default(),
        )
        .unwrap();
        let err = enroll(&mut client, &mut issuer, &mut Wire::default(), &mut world).unwrap_err();
        assert!(err.to_string().contains("refused"), "{err}");
        assert!(world.ledger.is_empty());
        assert!(client.holds_ibv(), "template kept for a retry");
    }

    #[test]
    fn remote_and_local_accept_genuine_reject_impostor() {
        let mut s = setup(20);
        for (mode, bound) in [(AuthMode::Remote, false), (AuthMode::Local, false), (AuthMode::Local, true)] {
            let cbv = genuine(&s, 21);
            let out =
                authenticate(&mut s.client, &mut s.verifier, mode, cbv, bound, &mut s.wire, &mut s.world, &mut Passive)
                    .unwrap();
            assert_eq!(out, AuthOutcome::accepted(mode));
            assert_eq!(s.client.last_outcome(), Some(&out));

            let impostor = generate_ibv(999, 512).unwrap();
            let out = authenticate(
                &mut s.client,
                &mut s.verifier,
                mode,
                impostor,
                bound,
                &mut s.wire,
                &mut s.world,
                &mut Passive,
            )
            .unwrap();
            assert_eq!(out, AuthOutcome::rejected(mode, FailureReason::BiometricMismatch));
        }
    }

    #[test]
    fn shamir_enrollment_round_trips() {
        for (k, n) in [(2, 2), (2, 3), (3, 5)] {
            let mut s = setup_with(30 + u64::from(k), SharingScheme::Shamir { k, n }, ServerConfig::default());
            assert_eq!(s.client.local_share_count(), 1);
            let cbv = genuine(&s, 1);
            let out = authenticate_remote(&mut s.client, &mut s.verifier, cbv, &mut s.wire, &mut s.world).unwrap();
            assert!(out.accepted, "k={k} n={n}");
            let cbv = genuine(&s, 2);
            let out = authenticate_local(&mut s.client, &mut s.verifier, cbv, true, &mut s.wire, &mut s.world).unwrap();
            assert!(out.accepted, "k={k} n={n}");
        }
    }

    #[test]
    fn issuer_can_also_verify() {
        let mut s = setup(40);
        let cbv = genuine(&s, 1);
        let out = authenticate_remote(&mut s.client, &mut s.issuer, cbv, &mut s.wire, &mut s.world).unwrap();
        assert!(out.accepted);
    }

    #[test]
    fn escrow_trust_arrangement() {
        let escrow = generate_keypair(KeyRole::Rkp, 4242);
        let config = ServerConfig { credential_recipient: Some(*escrow.public()), ..ServerConfig::default() };
        let mut s = setup_with(50, SharingScheme::Xor, config.clone());
        let mut verifier = ServerState::new("verifier", generate_keypair(KeyRole::Rkp, 51), config, 52);
        verifier.trust_issuer(*s.issuer.signing_public().unwrap());
        let cbv = genuine(&s, 1);
        let out = authenticate_remote(&mut s.client, &mut verifier, cbv.clone(), &mut s.wire, &mut s.world).unwrap();
        assert_eq!(out.failure_reason, Some(FailureReason::UnknownIssuer), "no key for the credential yet");
        verifier.add_credential_key(escrow);
        let out = authenticate_remote(&mut s.client, &mut verifier, cbv, &mut s.wire, &mut s.world).unwrap();
        assert!(out.accepted);
    }

    #[test]
    fn untrusted_issuer_and_tampered_hub() {
        let mut s = setup(60);
        let mut stranger = ServerState::new("verifier", generate_keypair(KeyRole::Rkp, 61), ServerConfig::default(), 62);
        let cbv = genuine(&s, 1);
        let out = authenticate_remote(&mut s.client, &mut stranger, cbv.clone(), &mut s.wire, &mut s.world).unwrap();
        assert_eq!(out.failure_reason, Some(FailureReason::UnknownIssuer));

        let r: StorageRef = s.world.ledger.resolve(&s.did).unwrap().storage_ref.parse().unwrap();
        s.world.hubs.get_mut("hub-1").unwrap().tamper(&r, 40, b'0').unwrap();
        for mode in [AuthMode::Remote, AuthMode::Local] {
            let out = authenticate(
                &mut s.client,
                &mut s.verifier,
                mode,
                cbv.clone(),
                true,
                &mut s.wire,
                &mut s.world,
                &mut Passive,
            )
            .unwrap();
            assert_eq!(out, AuthOutcome::rejected(mode, FailureReason::TamperDetected));
        }
    }

    /// Re-sends the last captured message of one kind once the wire is idle.
    struct Replayer {
        kind: MessageKind,
        captured: Option<ProtocolMessage>,
        done: bool,
    }

    impl ChannelTap for Replayer {
        fn observe(&mut self, _tick: u64, msg: &ProtocolMessage) {
            if msg.kind() == self.kind {
                self.captured = Some(msg.clone());
            }
        }

        fn on_idle(&mut self, _tick: u64) -> Vec<ProtocolMessage> {
            if self.done {
                return Vec::new();
            }
            self.done = true;
            self.captured.clone().into_iter().collect()
        }
    }

    #[test]
    fn replayed_final_message_is_rejected() {
        let mut s = setup(70);
        for (mode, kind) in [(AuthMode::Remote, MessageKind::ShareAndCbv), (AuthMode::Local, MessageKind::HmacProof)] {
            let cbv = genuine(&s, 1);
            let mut tap = Replayer { kind, captured: None, done: false };
            let out =
                authenticate(&mut s.client, &mut s.verifier, mode, cbv, true, &mut s.wire, &mut s.world, &mut tap)
                    .unwrap();
            assert_eq!(out, AuthOutcome::rejected(mode, FailureReason::Replay), "latest verdict for the session");
            let d = s.verifier.decisions();
            assert_eq!(d[d.len() - 2].outcome, AuthOutcome::accepted(mode));
            assert_eq!(d[d.len() - 2].session_id, d[d.len() - 1].session_id);
            assert_eq!(s.client.last_outcome(), Some(&out));
        }
    }

    #[test]
    fn stale_challenge_expires() {
        let mut s = setup(80);
        s.verifier.config_mut().challenge_ttl = 1;
        let cbv = genuine(&s, 1);
        let out = authenticate_remote(&mut s.client, &mut s.verifier, cbv, &mut s.wire, &mut s.world).unwrap();
        assert_eq!(out.failure_reason, Some(FailureReason::ChallengeExpired));
    }

    #[test]
    fn server_challenge_table() {
        let mut server = ServerState::new("s", generate_keypair(KeyRole::Rkp, 1), ServerConfig::default(), 1);
        let a = server.issue_challenge(0);
        let b = server.issue_challenge(0);
        assert_ne!(a.nonce, b.nonce);
        server.consume_challenge(&a.nonce, 5).unwrap();
        assert_eq!(server.consume_challenge(&a.nonce, 6), Err(FailureReason::Replay));
        assert_eq!(server.check_challenge(&Nonce([0; 16]), 6), Err(FailureReason::Replay));
        assert_eq!(server.check_challenge(&b.nonce, 100), Err(FailureReason::ChallengeExpired));
        assert_eq!(server.check_challenge(&b.nonce, 100), Err(FailureReason::ChallengeExpired));

        let c = server.issue_challenge(200);
        server.collect_garbage(200 + 100 + crate::protocol::CHALLENGE_GC_GRACE - 1);
        assert_eq!(server.live_challenges(), 1);
        server.collect_garbage(200 + 100 + crate::protocol::CHALLENGE_GC_GRACE);
        assert_eq!(server.live_challenges(), 0);
        assert_eq!(server.check_challenge(&c.nonce, 0), Err(FailureReason::ChallengeExpired));
        assert!(server.is_consumed(&a.nonce));
    }

    #[test]
    fn share_spoof_needs_only_public_data_without_mitigation() {
        use crate::canonical;
        use crate::crypto::seal_envelope;
        use crate::protocol::message::PossessionPayload;
        use crate::protocol::possession_tag;
        use crate::storage::DidDocument;
        use rand::SeedableRng;

        for mitigation in [false, true] {
            let mut s = setup(90);
            s.verifier.config_mut().require_bound_possession = mitigation;
            let record = s.world.ledger.resolve(&s.did).unwrap().clone();
            let doc: DidDocument = s.world.hubs.get("hub-1").unwrap()
                .get_document(&record.storage_ref.parse().unwrap(), None)
                .unwrap();
            let adv = crate::protocol::ActorId::new("mallory");
            let mut ctx_world = std::mem::take(&mut s.world);
            let req = ProtocolMessage::new(
                Nonce([7; 16]),
                &adv,
                s.verifier.id(),
                Body::AuthRequest { mode: AuthMode::Local, did: s.did.clone(), enrollment_public: doc.enrollment_public },
            );
            let mut ctx = crate::protocol::Context { now: 1, world: &mut ctx_world, notes: vec![] };
            let grant = s.verifier.handle(req, &mut ctx).pop().unwrap();
            let Body::RemoteShareDelivery { challenge, server_public, credential, .. } = &grant.body else {
                panic!("expected delivery, got {:?}", grant.kind());
            };
            let cred = credential.canonical_bytes();
            let proof = PossessionPayload {
                matched: true,
                tag: possession_tag(&doc.share_commitment, None, &cred, None),
                binding_signature: None,
            };
            let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(1);
            let env = seal_envelope(&canonical::to_canonical_bytes(&proof), server_public, challenge, 2, &mut rng)
                .unwrap();
            let mut ctx = crate::protocol::Context { now: 2, world: &mut ctx_world, notes: vec![] };
            s.verifier.handle(grant.reply(Body::HmacProof { envelope: env }), &mut ctx);
            let outcome = &s.verifier.decisions().last().unwrap().outcome;
            if mitigation {
                assert_eq!(outcome.failure_reason, Some(FailureReason::SpoofDetected));
            } else {
                assert!(outcome.accepted);
            }
        }
    }
}
