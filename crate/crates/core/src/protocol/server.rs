//! BOPS server actor, acting as issuer (enrollment) or verifier
//! (authentication) depending on the traffic it receives.

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use zeroize::Zeroizing;

use crate::biometrics::{match_vectors, DEFAULT_THRESHOLD};
use crate::canonical;
use crate::crypto::{
    self, open_bound, open_envelope, seal_bound, seal_envelope, Challenge, Envelope, EnvelopeError, KeyPair,
    Nonce, PublicKey, Tick, DEFAULT_CHALLENGE_TTL,
};
use crate::ledger::Did;
use crate::sharing::{self, Share};
use crate::storage::{DidDocument, ServiceEndpoint, UnsignedDocument};

use super::message::{
    ActorId, Body, CredentialPayload, EnrollmentPayload, PossessionPayload, ProtocolMessage, RemoteMatchPayload,
    SessionId,
};
use super::{
    credential_binding, possession_key, possession_message, publish_document, verify_claim, Actor, AuthMode,
    AuthOutcome, Context, FailureReason,
};

/// Opened payload, the holder's document and the redeemed challenge.
type Redeemed = (Zeroizing<Vec<u8>>, Box<DidDocument>, Challenge);

/// Extra ticks an unconsumed challenge stays in the table past expiry.
pub const CHALLENGE_GC_GRACE: Tick = 10;

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub challenge_ttl: Tick,
    pub threshold: f64,
    /// Local mode: require the LKP-bound possession proof (the HMAC-spoof
    /// mitigation) instead of the bare share-keyed tag.
    pub require_bound_possession: bool,
    /// Hubs an issuer writes enrolled documents to, in order; more than one
    /// gives redundant replicas.
    pub enrollment_hubs: Vec<String>,
    /// Recipient of newly issued credentials. `None` seals them to this
    /// server's own RKP.
    pub credential_recipient: Option<PublicKey>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            challenge_ttl: DEFAULT_CHALLENGE_TTL,
            threshold: DEFAULT_THRESHOLD,
            require_bound_possession: false,
            enrollment_hubs: vec!["hub-1".to_string()],
            credential_recipient: None,
        }
    }
}

#[derive(Debug)]
enum Session {
    Enrolling { challenge: Nonce },
    Remote { challenge: Nonce, doc: Box<DidDocument> },
    Local { challenge: Nonce, doc: Box<DidDocument> },
    Closed,
}

/// Verdict recorded by a verifier for one session.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub session_id: SessionId,
    pub tick: Tick,
    pub outcome: AuthOutcome,
}

pub struct ServerState {
    id: ActorId,
    server_keys: KeyPair,
    signing_keys: Option<KeyPair>,
    credential_keyring: Vec<KeyPair>,
    known_issuers: BTreeSet<PublicKey>,
    challenge_table: BTreeMap<Nonce, Challenge>,
    consumed_nonces: BTreeSet<Nonce>,
    expired_nonces: BTreeSet<Nonce>,
    sessions: BTreeMap<SessionId, Session>,
    hub_tokens: BTreeMap<String, String>,
    decisions: Vec<Decision>,
    enrolled: Vec<Did>,
    config: ServerConfig,
    rng: ChaCha20Rng,
}

impl std::fmt::Debug for ServerState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ServerState")
            .field("id", &self.id)
            .field("server_key", self.server_keys.key_id())
            .field("live_challenges", &self.challenge_table.len())
            .field("decisions", &self.decisions.len())
            .finish_non_exhaustive()
    }
}

impl ServerState {
    /// `server_keys` is this server's RKP; its private half also opens
    /// credentials sealed to it.
    pub fn new(id: impl Into<String>, server_keys: KeyPair, config: ServerConfig, seed: u64) -> Self {
        ServerState {
            id: ActorId::new(id),
            credential_keyring: vec![server_keys.clone()],
            server_keys,
            signing_keys: None,
            known_issuers: BTreeSet::new(),
            challenge_table: BTreeMap::new(),
            consumed_nonces: BTreeSet::new(),
            expired_nonces: BTreeSet::new(),
            sessions: BTreeMap::new(),
            hub_tokens: BTreeMap::new(),
            decisions: Vec::new(),
            enrolled: Vec::new(),
            config,
            rng: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    /// Makes this server able to issue: it signs documents with `keys`.
    pub fn with_signing_keys(mut self, keys: KeyPair) -> Self {
        self.known_issuers.insert(*keys.public());
        self.signing_keys = Some(keys);
        self
    }

    pub fn trust_issuer(&mut self, issuer_public: PublicKey) {
        self.known_issuers.insert(issuer_public);
    }

    /// Adds a private key able to open credentials sealed elsewhere (another
    /// issuer's RKP, or a deployment escrow key).
    pub fn add_credential_key(&mut self, keys: KeyPair) {
        if !self.credential_keyring.iter().any(|k| k.key_id() == keys.key_id()) {
            self.credential_keyring.push(keys);
        }
    }

    pub fn grant_hub_token(&mut self, hub_id: impl Into<String>, token: impl Into<String>) {
        self.hub_tokens.insert(hub_id.into(), token.into());
    }

    pub fn id(&self) -> &ActorId {
        &self.id
    }

    pub fn public(&self) -> &PublicKey {
        self.server_keys.public()
    }

    pub fn signing_public(&self) -> Option<&PublicKey> {
        self.signing_keys.as_ref().map(KeyPair::public)
    }

    pub fn known_issuers(&self) -> &BTreeSet<PublicKey> {
        &self.known_issuers
    }

    pub fn hub_token(&self, hub_id: &str) -> Option<&str> {
        self.hub_tokens.get(hub_id).map(String::as_str)
    }

    pub fn config(&self) -> &ServerConfig {
        &self.config
    }

    pub fn config_mut(&mut self) -> &mut ServerConfig {
        &mut self.config
    }

    pub fn decisions(&self) -> &[Decision] {
        &self.decisions
    }

    pub fn decision_for(&self, session: &SessionId) -> Option<&AuthOutcome> {
        self.decisions.iter().rev().find(|d| d.session_id == *session).map(|d| &d.outcome)
    }

    pub fn enrolled(&self) -> &[Did] {
        &self.enrolled
    }

    pub fn live_challenges(&self) -> usize {
        self.challenge_table.len()
    }

    pub fn is_consumed(&self, nonce: &Nonce) -> bool {
        self.consumed_nonces.contains(nonce)
    }

    /// Records a fresh, unique challenge.
    pub fn issue_challenge(&mut self, now: Tick) -> Challenge {
        loop {
            let ch = Challenge::issue(&mut self.rng, now, self.config.challenge_ttl);
            let n = ch.nonce;
            if !self.challenge_table.contains_key(&n)
                && !self.consumed_nonces.contains(&n)
                && !self.expired_nonces.contains(&n)
            {
                self.challenge_table.insert(n, ch.clone());
                return ch;
            }
        }
    }

    /// Fails with `Replay` for consumed or never-issued nonces and
    /// `ChallengeExpired` for stale ones. Does not consume.
    pub fn check_challenge(&mut self, nonce: &Nonce, now: Tick) -> Result<Challenge, FailureReason> {
        if self.consumed_nonces.contains(nonce) {
            return Err(FailureReason::Replay);
        }
        if self.expired_nonces.contains(nonce) {
            return Err(FailureReason::ChallengeExpired);
        }
        let ch = self.challenge_table.get(nonce).ok_or(FailureReason::Replay)?;
        if ch.is_expired(now) {
            let n = *nonce;
            self.challenge_table.remove(&n);
            self.expired_nonces.insert(n);
            return Err(FailureReason::ChallengeExpired);
        }
        Ok(ch.clone())
    }

    /// Marks a nonce used. Every later use reports `Replay`.
    pub fn consume_challenge(&mut self, nonce: &Nonce, now: Tick) -> Result<(), FailureReason> {
        self.check_challenge(nonce, now)?;
        let mut ch = self.challenge_table.remove(nonce).expect("checked above");
        ch.consume(now).expect("checked above");
        self.consumed_nonces.insert(*nonce);
        Ok(())
    }

    /// Drops unconsumed challenges once they are past expiry plus
    /// [`CHALLENGE_GC_GRACE`]. Their nonces stay rejected.
    pub fn collect_garbage(&mut self, now: Tick) {
        let stale: Vec<Nonce> = self
            .challenge_table
            .values()
            .filter(|c| now >= c.issued_at + c.expires_after + CHALLENGE_GC_GRACE)
            .map(|c| c.nonce)
            .collect();
        for n in stale {
            self.challenge_table.remove(&n);
            self.expired_nonces.insert(n);
        }
    }

    /// Opens a credential with whichever keyring entry it was sealed to.
    pub fn open_credential(&self, doc: &DidDocument) -> Result<Vec<Share>, FailureReason> {
        let keys = self
            .credential_keyring
            .iter()
            .find(|k| *k.key_id() == doc.auth_credential.recipient_key_id)
            .ok_or(FailureReason::UnknownIssuer)?;
        let plain = open_bound(&doc.auth_credential, keys, &credential_binding(&doc.enrollment_public))
            .map_err(|_| FailureReason::TamperDetected)?;
        let payload: CredentialPayload =
            serde_json::from_slice(&plain).map_err(|_| FailureReason::TamperDetected)?;
        Ok(payload.shares.clone())
    }

    fn open_wire(&self, env: &Envelope, challenge: &Challenge) -> Result<Zeroizing<Vec<u8>>, FailureReason> {
        open_envelope(env, &self.server_keys, challenge).map_err(|e| match e {
            EnvelopeError::KeyMismatch => FailureReason::KeyMismatch,
            EnvelopeError::ChallengeMismatch => FailureReason::Replay,
            EnvelopeError::TagFailure | EnvelopeError::Malformed => FailureReason::TamperDetected,
        })
    }

    fn decide(&mut self, msg: &ProtocolMessage, now: Tick, outcome: AuthOutcome) -> ProtocolMessage {
        self.decisions.push(Decision { session_id: msg.session_id, tick: now, outcome: outcome.clone() });
        msg.reply(Body::AuthResult { outcome })
    }

    fn handle_enroll_request(&mut self, msg: &ProtocolMessage, ctx: &mut Context<'_>) -> ProtocolMessage {
        if self.signing_keys.is_none() {
            return msg.reply(Body::EnrollResult { did: None, error: Some("server does not issue".into()) });
        }
        let challenge = self.issue_challenge(ctx.now);
        self.sessions.insert(msg.session_id, Session::Enrolling { challenge: challenge.nonce });
        msg.reply(Body::ChallengeGrant { challenge, server_public: *self.public() })
    }

    fn handle_enroll_share(
        &mut self,
        msg: &ProtocolMessage,
        env: &Envelope,
        ctx: &mut Context<'_>,
    ) -> ProtocolMessage {
        let fail = |reason: String| msg.reply(Body::EnrollResult { did: None, error: Some(reason) });
        match self.sessions.get(&msg.session_id) {
            Some(Session::Enrolling { challenge }) if *challenge == env.challenge_id => {}
            _ => return fail("no enrollment in progress for this challenge".into()),
        }
        let challenge = match self.check_challenge(&env.challenge_id, ctx.now) {
            Ok(c) => c,
            Err(reason) => return fail(format!("{reason:?}")),
        };
        let plain = match self.open_wire(env, &challenge) {
            Ok(p) => p,
            Err(reason) => return fail(format!("{reason:?}")),
        };
        self.consume_challenge(&env.challenge_id, ctx.now).expect("checked above");
        self.sessions.insert(msg.session_id, Session::Closed);
        let payload: EnrollmentPayload = match serde_json::from_slice(&plain) {
            Ok(p) => p,
            Err(e) => return fail(format!("malformed enrollment payload: {e}")),
        };

        match self.issue_document(&payload, ctx) {
            Ok(did) => {
                ctx.notes.push(format!("enrolled {did}"));
                self.enrolled.push(did.clone());
                msg.reply(Body::EnrollResult { did: Some(did), error: None })
            }
            Err(e) => fail(e.to_string()),
        }
    }

    /// Seals the remote shares into a signed document, stores it, then
    /// registers it. Plaintext shares are dropped (and wiped) on return.
    fn issue_document(
        &mut self,
        payload: &EnrollmentPayload,
        ctx: &mut Context<'_>,
    ) -> Result<Did, super::ProtocolError> {
        let signing = self.signing_keys.as_ref().expect("checked by caller");
        let recipient = self.config.credential_recipient.unwrap_or(*self.server_keys.public());
        let credential_plain = Zeroizing::new(canonical::to_canonical_bytes(&CredentialPayload {
            shares: payload.shares.clone(),
        }));
        let auth_credential = seal_bound(
            &credential_plain,
            &recipient,
            credential_binding(&payload.enrollment_public),
            &mut self.rng,
        );
        let mut service_endpoints = vec![ServiceEndpoint::new("issuer", format!("bops://{}", self.id))];
        service_endpoints
            .extend(self.config.enrollment_hubs.iter().map(|h| ServiceEndpoint::new("hub", format!("hub://{h}"))));
        let doc = DidDocument::issue(
            UnsignedDocument {
                issuer_public: *signing.public(),
                enrollment_public: payload.enrollment_public,
                auth_credential,
                share_commitment: payload.share_commitment,
                service_endpoints,
            },
            signing,
        )?;
        let (did, _) = publish_document(ctx.world, &doc, &self.config.enrollment_hubs)?;
        Ok(did)
    }

    fn handle_auth_request(
        &mut self,
        msg: &ProtocolMessage,
        mode: AuthMode,
        did: &Did,
        enrollment_public: &PublicKey,
        ctx: &mut Context<'_>,
    ) -> ProtocolMessage {
        let doc = match verify_claim(self, did, enrollment_public, ctx.world) {
            Ok(doc) => doc,
            Err(reason) => {
                self.sessions.insert(msg.session_id, Session::Closed);
                return self.decide(msg, ctx.now, AuthOutcome::rejected(mode, reason));
            }
        };
        match mode {
            AuthMode::Remote => {
                let challenge = self.issue_challenge(ctx.now);
                self.sessions
                    .insert(msg.session_id, Session::Remote { challenge: challenge.nonce, doc: Box::new(doc) });
                msg.reply(Body::ChallengeGrant { challenge, server_public: *self.public() })
            }
            AuthMode::Local => {
                let shares = match self.open_credential(&doc) {
                    Ok(s) => s,
                    Err(reason) => {
                        self.sessions.insert(msg.session_id, Session::Closed);
                        return self.decide(msg, ctx.now, AuthOutcome::rejected(mode, reason));
                    }
                };
                let challenge = self.issue_challenge(ctx.now);
                let plain = Zeroizing::new(canonical::to_canonical_bytes(&CredentialPayload { shares }));
                let delivery = seal_envelope(&plain, &doc.enrollment_public, &challenge, ctx.now, &mut self.rng)
                    .expect("fresh challenge is usable");
                let credential = doc.auth_credential.clone();
                self.sessions
                    .insert(msg.session_id, Session::Local { challenge: challenge.nonce, doc: Box::new(doc) });
                msg.reply(Body::RemoteShareDelivery {
                    challenge,
                    server_public: *self.public(),
                    delivery,
                    credential,
                })
            }
        }
    }

    /// Common front half of the two final messages: challenge state, session
    /// match, envelope opening, consumption.
    fn redeem(
        &mut self,
        msg: &ProtocolMessage,
        env: &Envelope,
        mode: AuthMode,
        now: Tick,
    ) -> Result<Redeemed, FailureReason> {
        let challenge = self.check_challenge(&env.challenge_id, now)?;
        let doc = match self.sessions.get(&msg.session_id) {
            Some(Session::Remote { challenge: c, doc }) if mode == AuthMode::Remote && *c == env.challenge_id => {
                doc.clone()
            }
            Some(Session::Local { challenge: c, doc }) if mode == AuthMode::Local && *c == env.challenge_id => {
                doc.clone()
            }
            _ => return Err(FailureReason::Replay),
        };
        let plain = self.open_wire(env, &challenge)?;
        self.consume_challenge(&env.challenge_id, now)?;
        self.sessions.insert(msg.session_id, Session::Closed);
        Ok((plain, doc, challenge))
    }

    fn handle_share_and_cbv(&mut self, msg: &ProtocolMessage, env: &Envelope, now: Tick) -> ProtocolMessage {
        let mode = AuthMode::Remote;
        let outcome = match self.remote_match(msg, env, now) {
            Ok(()) => AuthOutcome::accepted(mode),
            Err(reason) => AuthOutcome::rejected(mode, reason),
        };
        self.decide(msg, now, outcome)
    }

    fn remote_match(&mut self, msg: &ProtocolMessage, env: &Envelope, now: Tick) -> Result<(), FailureReason> {
        let (plain, doc, _) = self.redeem(msg, env, AuthMode::Remote, now)?;
        let payload: RemoteMatchPayload =
            serde_json::from_slice(&plain).map_err(|_| FailureReason::TamperDetected)?;
        drop(plain);
        let mut shares = payload.shares.clone();
        shares.extend(self.open_credential(&doc)?);
        shares.sort_by_key(Share::index);
        let reference = sharing::combine(&shares).map_err(|_| FailureReason::BiometricMismatch)?;
        let result =
            match_vectors(&reference, &payload.cbv, self.config.threshold).map_err(|_| FailureReason::BiometricMismatch)?;
        // `reference`, `shares` and `payload` are wiped on drop.
        if result.accepted {
            Ok(())
        } else {
            Err(FailureReason::BiometricMismatch)
        }
    }

    fn handle_hmac_proof(&mut self, msg: &ProtocolMessage, env: &Envelope, now: Tick) -> ProtocolMessage {
        let mode = AuthMode::Local;
        let outcome = match self.check_possession(msg, env, now) {
            Ok(()) => AuthOutcome::accepted(mode),
            Err(reason) => AuthOutcome::rejected(mode, reason),
        };
        self.decide(msg, now, outcome)
    }

    fn check_possession(&mut self, msg: &ProtocolMessage, env: &Envelope, now: Tick) -> Result<(), FailureReason> {
        let (plain, doc, challenge) = self.redeem(msg, env, AuthMode::Local, now)?;
        let proof: PossessionPayload = serde_json::from_slice(&plain).map_err(|_| FailureReason::TamperDetected)?;
        if !proof.matched {
            return Err(FailureReason::BiometricMismatch);
        }
        let credential = doc.auth_credential.canonical_bytes();
        let bound = self.config.require_bound_possession;
        let signature = if bound {
            let sig = proof.binding_signature.as_ref().ok_or(FailureReason::SpoofDetected)?;
            let statement = super::binding_statement(&challenge.nonce, &credential);
            if !crypto::verify(&statement, sig, &doc.enrollment_public) {
                return Err(FailureReason::SpoofDetected);
            }
            Some(sig)
        } else {
            None
        };
        let key = possession_key(&doc.share_commitment, signature);
        let message = possession_message(&credential, bound.then_some(&challenge.nonce));
        if crypto::verify_tag(key.as_bytes(), &message, proof.tag.as_bytes()) {
            Ok(())
        } else {
            Err(FailureReason::SpoofDetected)
        }
    }
}

impl Actor for ServerState {
    fn id(&self) -> &ActorId {
        &self.id
    }

    fn handle(&mut self, msg: ProtocolMessage, ctx: &mut Context<'_>) -> Vec<ProtocolMessage> {
        self.collect_garbage(ctx.now);
        let reply = match &msg.body {
            Body::EnrollRequest {} => self.handle_enroll_request(&msg, ctx),
            Body::EnrollShare { envelope } => self.handle_enroll_share(&msg, envelope, ctx),
            Body::AuthRequest { mode, did, enrollment_public } => {
                self.handle_auth_request(&msg, *mode, did, enrollment_public, ctx)
            }
            Body::ShareAndCbv { envelope } => self.handle_share_and_cbv(&msg, envelope, ctx.now),
            Body::HmacProof { envelope } => self.handle_hmac_proof(&msg, envelope, ctx.now),
            Body::AuthResult { .. } | Body::Error { .. } => {
                ctx.notes.push(format!("ignored {:?}", msg.kind()));
                return Vec::new();
            }
            other => msg.reply(Body::Error { reason: format!("unexpected {:?}", other.kind()) }),
        };
        vec![reply]
    }
}
