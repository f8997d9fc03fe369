use std::fs;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::biometrics::{derive_cbv, generate_ibv, BiometricVector};
use crate::crypto::{generate_keypair, KeyPair, KeyRole};
use crate::ledger::{Did, Ledger};
use crate::protocol::{
    authenticate, enroll_observed, enrollment_shares, Actor, ActorId, AuthMode, AuthOutcome, ChannelTap,
    ClientConfig, ClientState, Passive, ProtocolError, ServerConfig, ServerState, Wire, World,
};
use crate::storage::{FileHub, HubRegistry, MemoryHub};

use super::adversary::{count_leaks, tamper_hub, RecordingTap, ReplayTap, ShareSpoofer};
use super::config::{mode_name, AdversaryKind, SimulationConfig, Trust};
use super::transcript::{Summary, Transcript, Verdict};
use super::{HarnessError, ADVERSARY_ID, HARNESS_ID, LEDGER_FILE};

/// Per-actor seeds, all drawn from the master seed in a fixed order.
#[derive(Debug, Clone, Copy)]
struct Seeds {
    ibv: u64,
    cbv: u64,
    impostor: u64,
    issuer_rkp: u64,
    issuer_signing: u64,
    issuer: u64,
    lkp: u64,
    client: u64,
    verifier_rkp: u64,
    verifier: u64,
    escrow: u64,
    adversary: u64,
}

impl Seeds {
    fn derive(master: u64, stream: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(master);
        rng.set_stream(stream);
        Seeds {
            ibv: rng.gen(),
            cbv: rng.gen(),
            impostor: rng.gen(),
            issuer_rkp: rng.gen(),
            issuer_signing: rng.gen(),
            issuer: rng.gen(),
            lkp: rng.gen(),
            client: rng.gen(),
            verifier_rkp: rng.gen(),
            verifier: rng.gen(),
            escrow: rng.gen(),
            adversary: rng.gen(),
        }
    }
}

pub fn hub_ids(replicas: usize) -> Vec<String> {
    (1..=replicas).map(|i| format!("hub-{i}")).collect()
}

/// A fully wired deployment: hubs, ledger, issuer, verifier and one
/// not-yet-enrolled client. The harness keeps the enrollment template as
/// ground truth for probes and leak scans; the actors never see this copy.
pub struct Deployment {
    pub config: SimulationConfig,
    pub world: World,
    pub wire: Wire,
    pub client: ClientState,
    pub issuer: ServerState,
    /// `None` when the roster names the issuer as verifier too.
    pub verifier: Option<ServerState>,
    pub did: Option<Did>,
    client_config: ClientConfig,
    ibv: BiometricVector,
    seeds: Seeds,
}

impl Deployment {
    pub fn new(config: &SimulationConfig) -> Result<Self, HarnessError> {
        Self::build(config, 0)
    }

    /// Independent deployment number `trial` under the same master seed.
    pub fn for_trial(config: &SimulationConfig, trial: u64) -> Result<Self, HarnessError> {
        Self::build(config, trial)
    }

    fn build(config: &SimulationConfig, stream: u64) -> Result<Self, HarnessError> {
        config.validate()?;
        let seeds = Seeds::derive(config.seed, stream);
        let ids = hub_ids(config.replicas);
        let mut hubs = HubRegistry::new();
        for id in &ids {
            match &config.state_dir {
                Some(dir) => hubs.add(FileHub::open(id.clone(), dir.join(id)).map_err(io_error)?),
                None => hubs.add(MemoryHub::new(id.clone())),
            }
        }
        let world = World::new(Ledger::new(), hubs);

        let issuer_rkp = generate_keypair(KeyRole::Rkp, seeds.issuer_rkp);
        let escrow = (config.trust == Trust::Escrow).then(|| generate_keypair(KeyRole::Rkp, seeds.escrow));
        let server_config = ServerConfig {
            challenge_ttl: config.challenge_ttl,
            threshold: config.threshold,
            require_bound_possession: config.mitigation,
            enrollment_hubs: ids,
            credential_recipient: escrow.as_ref().map(|k| *k.public()),
        };
        let credential_key: KeyPair = escrow.unwrap_or_else(|| issuer_rkp.clone());
        let mut issuer = ServerState::new(config.roster.issuer.clone(), issuer_rkp, server_config.clone(), seeds.issuer)
            .with_signing_keys(generate_keypair(KeyRole::IssuerSigning, seeds.issuer_signing));
        issuer.add_credential_key(credential_key.clone());
        let verifier = (config.roster.verifier != config.roster.issuer).then(|| {
            let mut v = ServerState::new(
                config.roster.verifier.clone(),
                generate_keypair(KeyRole::Rkp, seeds.verifier_rkp),
                server_config,
                seeds.verifier,
            );
            v.trust_issuer(*issuer.signing_public().expect("issuer signs"));
            v.add_credential_key(credential_key);
            v
        });

        let ibv = generate_ibv(seeds.ibv, config.vector_length).map_err(|e| HarnessError::Config(e.to_string()))?;
        let client_config = ClientConfig { scheme: config.scheme, threshold: config.threshold, seed: seeds.client };
        let client = ClientState::new(
            config.roster.client.clone(),
            generate_keypair(KeyRole::Lkp, seeds.lkp),
            ibv.clone(),
            client_config,
        )?;
        Ok(Deployment {
            config: config.clone(),
            world,
            wire: Wire::new(config.latency, config.tick_budget),
            client,
            issuer,
            verifier,
            did: None,
            client_config,
            ibv,
            seeds,
        })
    }

    pub fn enroll(&mut self, tap: &mut dyn ChannelTap) -> Result<Did, HarnessError> {
        let did = enroll_observed(&mut self.client, &mut self.issuer, &mut self.wire, &mut self.world, tap)?;
        self.did = Some(did.clone());
        Ok(did)
    }

    pub fn verifier_id(&self) -> &ActorId {
        self.verifier.as_ref().unwrap_or(&self.issuer).id()
    }

    /// Noisy re-capture of the enrolled template, or an unrelated one.
    pub fn probe(&self, impostor: bool, nonce: u64) -> Result<BiometricVector, HarnessError> {
        let v = if impostor {
            generate_ibv(self.seeds.impostor ^ nonce, self.config.vector_length)
        } else {
            derive_cbv(&self.ibv, self.config.genuine_flip_prob, self.seeds.cbv ^ nonce)
        };
        v.map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn authenticate(
        &mut self,
        mode: AuthMode,
        cbv: BiometricVector,
        tap: &mut dyn ChannelTap,
    ) -> Result<AuthOutcome, HarnessError> {
        let verifier = self.verifier.as_mut().unwrap_or(&mut self.issuer);
        Ok(authenticate(
            &mut self.client,
            verifier,
            mode,
            cbv,
            self.config.mitigation,
            &mut self.wire,
            &mut self.world,
            tap,
        )?)
    }

    /// Every byte string that must never appear outside envelope
    /// ciphertext: the template, the probe, and all shares the client cut.
    pub fn secret_needles(&self, cbv: Option<&BiometricVector>) -> Result<Vec<Vec<u8>>, HarnessError> {
        let mut needles = vec![self.ibv.as_bytes().to_vec()];
        if let Some(c) = cbv {
            needles.push(c.as_bytes().to_vec());
        }
        for s in enrollment_shares(&self.ibv, &self.client_config)? {
            needles.push(s.payload().to_vec());
        }
        Ok(needles)
    }

    /// Every byte string an observer of wire, hubs and ledger could hold.
    pub fn public_bytes(&self, captured: Vec<Vec<u8>>) -> Result<Vec<Vec<u8>>, HarnessError> {
        let mut hay = captured;
        for (_, bytes) in self.world.hubs.all_objects().map_err(io_error)? {
            hay.push(bytes);
        }
        hay.push(self.world.ledger.export());
        Ok(hay)
    }

    /// Writes the ledger export next to the file hubs, if configured.
    pub fn persist(&self) -> Result<(), HarnessError> {
        if let Some(dir) = &self.config.state_dir {
            fs::create_dir_all(dir)?;
            fs::write(dir.join(LEDGER_FILE), self.world.ledger.export())?;
        }
        Ok(())
    }

    fn summary(&self, scenario: &str) -> Summary {
        Summary {
            seed: self.config.seed,
            scenario: scenario.to_string(),
            adversary: self.config.adversary.name().to_string(),
            mitigation: self.config.mitigation,
            did: self.did.clone(),
            outcome: None,
            leaks: None,
            error: None,
            final_tick: self.wire.now(),
            verdict: Verdict::Rejected,
        }
    }

    fn finish(mut self, mut summary: Summary) -> Result<Transcript, HarnessError> {
        self.persist()?;
        summary.final_tick = self.wire.now();
        Ok(Transcript { events: self.wire.take_events(), summary })
    }
}

fn io_error(e: crate::storage::StorageError) -> HarnessError {
    HarnessError::Scenario(e.to_string())
}

/// Enrollment only.
pub fn run_enrollment(config: &SimulationConfig) -> Result<Transcript, HarnessError> {
    let mut d = Deployment::new(config)?;
    let mut summary = d.summary("enroll");
    match d.enroll(&mut Passive) {
        Ok(did) => {
            summary.did = Some(did);
            summary.verdict = Verdict::Accepted;
        }
        Err(HarnessError::Protocol(e)) => summary.error = Some(e.to_string()),
        Err(e) => return Err(e),
    }
    d.finish(summary)
}

/// Enrolls the client, then runs one authentication in `config.mode` with
/// the configured adversary active.
pub fn run_scenario(config: &SimulationConfig) -> Result<Transcript, HarnessError> {
    let mut d = Deployment::new(config)?;
    let mode = if config.adversary == AdversaryKind::ShareSpoof { AuthMode::Local } else { config.mode };
    let mut summary = d.summary(mode_name(mode));
    let harness = ActorId::new(HARNESS_ID);
    if mode != config.mode {
        d.wire.note(&harness, "share-spoof targets local mode; running local");
    }

    let mut recorder = RecordingTap::default();
    let observing = config.adversary == AdversaryKind::MitmObserve;
    let did = {
        let tap: &mut dyn ChannelTap = if observing { &mut recorder } else { &mut Passive };
        match d.enroll(tap) {
            Ok(did) => did,
            Err(HarnessError::Protocol(e)) => {
                summary.error = Some(e.to_string());
                return d.finish(summary);
            }
            Err(e) => return Err(e),
        }
    };
    summary.did = Some(did.clone());

    let cbv = d.probe(config.impostor, 0)?;
    let outcome = match config.adversary {
        AdversaryKind::None => d.authenticate(mode, cbv.clone(), &mut Passive)?,
        AdversaryKind::MitmObserve => d.authenticate(mode, cbv.clone(), &mut recorder)?,
        AdversaryKind::Replay => {
            let mut tap = ReplayTap::for_mode(mode);
            let out = d.authenticate(mode, cbv.clone(), &mut tap)?;
            d.wire.note(&ActorId::new(ADVERSARY_ID), format!("replayed captured message: {}", tap.replayed()));
            out
        }
        AdversaryKind::TamperHub => {
            let mut rng = ChaCha20Rng::seed_from_u64(d.seeds.adversary);
            let (r, pos) = tamper_hub(&mut d.world, &did, &mut rng)?;
            d.wire.note(&ActorId::new(ADVERSARY_ID), format!("flipped one bit of byte {pos} in {r}"));
            d.authenticate(mode, cbv.clone(), &mut Passive)?
        }
        AdversaryKind::ShareSpoof => spoof(&mut d, did)?,
    };

    if observing {
        let needles = d.secret_needles(Some(&cbv))?;
        let hay = d.public_bytes(std::mem::take(&mut recorder).into_captured())?;
        let leaks = count_leaks(&needles, &hay);
        d.wire.note(&harness, format!("scanned {} captured objects for {} needles", hay.len(), needles.len()));
        summary.leaks = Some(leaks);
    }
    summary.verdict = match summary.leaks {
        Some(n) if n > 0 => Verdict::SecurityViolation,
        _ => Verdict::of(&outcome),
    };
    summary.outcome = Some(outcome);
    d.finish(summary)
}

fn spoof(d: &mut Deployment, did: Did) -> Result<AuthOutcome, HarnessError> {
    let verifier_id = d.verifier_id().clone();
    let mut mallory = ShareSpoofer::new(ADVERSARY_ID, &verifier_id, did, d.seeds.adversary);
    let first = mallory.begin(&d.world)?;
    let session = first.session_id;
    let verifier = d.verifier.as_mut().unwrap_or(&mut d.issuer);
    verifier.config_mut().require_bound_possession = d.config.mitigation;
    d.wire.run(&mut [&mut mallory as &mut dyn Actor, verifier], &mut d.world, vec![first], &mut Passive)
        .map_err(ProtocolError::from)?;
    let verifier = d.verifier.as_ref().unwrap_or(&d.issuer);
    verifier
        .decision_for(&session)
        .cloned()
        .ok_or_else(|| HarnessError::Scenario("verifier gave no verdict".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::FailureReason;

    fn cfg(adversary: AdversaryKind, mode: AuthMode, mitigation: bool) -> SimulationConfig {
        SimulationConfig { adversary, mode, mitigation, seed: 11, ..SimulationConfig::default() }
    }

    #[test]
    fn happy_paths() {
        for mode in [AuthMode::Remote, AuthMode::Local] {
            let t = run_scenario(&cfg(AdversaryKind::None, mode, false)).unwrap();
            assert_eq!(t.outcome(), Some(&AuthOutcome::accepted(mode)));
            assert_eq!(t.verdict(), Verdict::Accepted);
            assert!(t.is_monotonic());
        }
    }

    #[test]
    fn adversaries() {
        let reason = |t: &Transcript| t.outcome().and_then(|o| o.failure_reason);
        let t = run_scenario(&cfg(AdversaryKind::Replay, AuthMode::Remote, false)).unwrap();
        assert_eq!(reason(&t), Some(FailureReason::Replay));
        let t = run_scenario(&cfg(AdversaryKind::TamperHub, AuthMode::Local, false)).unwrap();
        assert_eq!(reason(&t), Some(FailureReason::TamperDetected));
        let t = run_scenario(&cfg(AdversaryKind::MitmObserve, AuthMode::Remote, false)).unwrap();
        assert_eq!(t.summary.leaks, Some(0));
        assert_eq!(t.verdict(), Verdict::Accepted);
        let t = run_scenario(&cfg(AdversaryKind::ShareSpoof, AuthMode::Remote, false)).unwrap();
        assert_eq!(t.outcome(), Some(&AuthOutcome::accepted(AuthMode::Local)), "attack goes through");
        let t = run_scenario(&cfg(AdversaryKind::ShareSpoof, AuthMode::Local, true)).unwrap();
        assert_eq!(reason(&t), Some(FailureReason::SpoofDetected));
        assert_eq!(t.verdict().exit_code(), 3);
    }

    #[test]
    fn impostor_is_rejected() {
        let c = SimulationConfig { impostor: true, ..cfg(AdversaryKind::None, AuthMode::Local, true) };
        let t = run_scenario(&c).unwrap();
        assert_eq!(t.outcome().unwrap().failure_reason, Some(FailureReason::BiometricMismatch));
        assert_eq!(t.verdict().exit_code(), 2);
    }

    #[test]
    fn same_seed_same_transcript() {
        let c = cfg(AdversaryKind::Replay, AuthMode::Local, true);
        assert_eq!(run_scenario(&c).unwrap().to_lines(), run_scenario(&c).unwrap().to_lines());
        let other = SimulationConfig { seed: 12, ..c.clone() };
        assert_ne!(run_scenario(&c).unwrap().to_lines(), run_scenario(&other).unwrap().to_lines());
    }

    #[test]
    fn issuer_as_verifier_and_escrow() {
        let mut c = cfg(AdversaryKind::None, AuthMode::Remote, false);
        c.roster.verifier = c.roster.issuer.clone();
        assert!(run_scenario(&c).unwrap().outcome().unwrap().accepted);
        let c = SimulationConfig { trust: Trust::Escrow, replicas: 3, ..cfg(AdversaryKind::None, AuthMode::Local, true) };
        assert!(run_scenario(&c).unwrap().outcome().unwrap().accepted);
    }

    #[test]
    fn file_backed_state_is_persisted() {
        let dir = tempfile::tempdir().unwrap();
        let c = SimulationConfig { state_dir: Some(dir.path().to_path_buf()), ..SimulationConfig::default() };
        let t = run_enrollment(&c).unwrap();
        assert_eq!(t.verdict(), Verdict::Accepted);
        let ledger = Ledger::import(&fs::read(dir.path().join(LEDGER_FILE)).unwrap()).unwrap();
        assert_eq!(ledger.len(), 1);
        assert!(ledger.verify_chain());
        assert_eq!(fs::read_dir(dir.path().join("hub-1")).unwrap().count(), 1);
    }
}
