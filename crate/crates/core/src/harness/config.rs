//! `SimulationConfig` and its flat `key = value` file format.
//!
//! ```text
//! # comments and blank lines are ignored
//! seed = 7
//! scheme = shamir
//! k = 2
//! n = 3
//! mode = local
//! adversary = share-spoof
//! mitigation = true
//! ```

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::biometrics::{DEFAULT_LENGTH, DEFAULT_THRESHOLD, GENUINE_FLIP_PROB};
use crate::crypto::{Tick, DEFAULT_CHALLENGE_TTL};
use crate::protocol::{AuthMode, DEFAULT_TICK_BUDGET};
use crate::sharing::SharingScheme;

use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AdversaryKind {
    None,
    Replay,
    TamperHub,
    MitmObserve,
    ShareSpoof,
}

impl AdversaryKind {
    pub const ALL: [AdversaryKind; 5] = [
        AdversaryKind::None,
        AdversaryKind::Replay,
        AdversaryKind::TamperHub,
        AdversaryKind::MitmObserve,
        AdversaryKind::ShareSpoof,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AdversaryKind::None => "none",
            AdversaryKind::Replay => "replay",
            AdversaryKind::TamperHub => "tamper-hub",
            AdversaryKind::MitmObserve => "mitm-observe",
            AdversaryKind::ShareSpoof => "share-spoof",
        }
    }
}

impl fmt::Display for AdversaryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AdversaryKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        AdversaryKind::ALL
            .into_iter()
            .find(|k| k.name() == norm || k.name().replace('-', "") == norm)
            .ok_or_else(|| HarnessError::Config(format!("unknown adversary {s:?}")))
    }
}

/// How a verifier gets at credentials sealed by an issuer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Trust {
    /// Verifier holds a copy of the issuer's RKP.
    SharedRkp,
    /// Credentials are sealed to a deployment-wide escrow key.
    Escrow,
}

impl Trust {
    pub fn name(self) -> &'static str {
        match self {
            Trust::SharedRkp => "shared-rkp",
            Trust::Escrow => "escrow",
        }
    }
}

impl FromStr for Trust {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "shared-rkp" | "shared_rkp" | "a" => Ok(Trust::SharedRkp),
            "escrow" | "b" => Ok(Trust::Escrow),
            _ => Err(HarnessError::Config(format!("unknown trust arrangement {s:?}"))),
        }
    }
}

pub fn parse_mode(s: &str) -> Result<AuthMode, HarnessError> {
    match s.trim().to_ascii_lowercase().as_str() {
        "remote" => Ok(AuthMode::Remote),
        "local" => Ok(AuthMode::Local),
        _ => Err(HarnessError::Config(format!("unknown mode {s:?}"))),
    }
}

pub fn mode_name(mode: AuthMode) -> &'static str {
    match mode {
        AuthMode::Remote => "remote",
        AuthMode::Local => "local",
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Roster {
    pub client: String,
    pub issuer: String,
    pub verifier: String,
}

impl Default for Roster {
    fn default() -> Self {
        Roster { client: "client".into(), issuer: "issuer".into(), verifier: "verifier".into() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub seed: u64,
    pub vector_length: usize,
    pub threshold: f64,
    pub genuine_flip_prob: f64,
    pub scheme: SharingScheme,
    pub mode: AuthMode,
    /// Authenticate with an unrelated template instead of a noisy re-capture.
    pub impostor: bool,
    pub roster: Roster,
    pub adversary: AdversaryKind,
    pub mitigation: bool,
    pub challenge_ttl: Tick,
    pub tick_budget: Tick,
    pub latency: Tick,
    pub trust: Trust,
    /// Hubs each document is written to.
    pub replicas: usize,
    /// Where file-backed hubs and the exported ledger go. In-memory when
    /// unset.
    pub state_dir: Option<PathBuf>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            seed: 1,
            vector_length: DEFAULT_LENGTH,
            threshold: DEFAULT_THRESHOLD,
            genuine_flip_prob: GENUINE_FLIP_PROB,
            scheme: SharingScheme::Xor,
            mode: AuthMode::Remote,
            impostor: false,
            roster: Roster::default(),
            adversary: AdversaryKind::None,
            mitigation: false,
            challenge_ttl: DEFAULT_CHALLENGE_TTL,
            tick_budget: DEFAULT_TICK_BUDGET,
            latency: 1,
            trust: Trust::SharedRkp,
            replicas: 1,
            state_dir: None,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, HarnessError> {
    value.parse().map_err(|_| HarnessError::Config(format!("bad value for {key}: {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, HarnessError> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(HarnessError::Config(format!("bad value for {key}: {value:?}"))),
    }
}

impl SimulationConfig {
    /// Parses the flat text format. Unknown keys and repeated keys are
    /// errors; missing keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut cfg = SimulationConfig::default();
        let mut seen = std::collections::BTreeSet::new();
        let (mut scheme_name, mut k, mut n) = (None::<String>, None::<u8>, None::<u8>);
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| HarnessError::Config(format!("line {}: expected key = value", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(HarnessError::Config(format!("line {}: duplicate key {key}", lineno + 1)));
            }
            match key {
                "seed" => cfg.seed = parse_value(key, value)?,
                "vector_length" => cfg.vector_length = parse_value(key, value)?,
                "threshold" => cfg.threshold = parse_value(key, value)?,
                "genuine_flip_prob" => cfg.genuine_flip_prob = parse_value(key, value)?,
                "scheme" => scheme_name = Some(value.to_ascii_lowercase()),
                "k" => k = Some(parse_value(key, value)?),
                "n" => n = Some(parse_value(key, value)?),
                "mode" => cfg.mode = parse_mode(value)?,
                "impostor" => cfg.impostor = parse_bool(key, value)?,
                "roster" => {
                    let names: Vec<&str> = value.split(',').map(str::trim).collect();
                    let [client, issuer, verifier] = names[..] else {
                        return Err(HarnessError::Config("roster lists client,issuer,verifier".into()));
                    };
                    cfg.roster = Roster { client: client.into(), issuer: issuer.into(), verifier: verifier.into() };
                }
                "adversary" => cfg.adversary = value.parse()?,
                "mitigation" => cfg.mitigation = parse_bool(key, value)?,
                "challenge_ttl" => cfg.challenge_ttl = parse_value(key, value)?,
                "tick_budget" => cfg.tick_budget = parse_value(key, value)?,
                "latency" => cfg.latency = parse_value(key, value)?,
                "trust" => cfg.trust = value.parse()?,
                "replicas" => cfg.replicas = parse_value(key, value)?,
                "state_dir" => cfg.state_dir = Some(PathBuf::from(value)),
                _ => return Err(HarnessError::Config(format!("line {}: unknown key {key}", lineno + 1))),
            }
        }
        cfg.scheme = match scheme_name.as_deref() {
            None | Some("xor") | Some("xor2of2") => {
                if k.is_some_and(|k| k != 2) || n.is_some_and(|n| n != 2) {
                    return Err(HarnessError::Config("xor sharing is 2-of-2".into()));
                }
                SharingScheme::Xor
            }
            Some("shamir") => SharingScheme::Shamir { k: k.unwrap_or(2), n: n.unwrap_or(3) },
            Some(other) => return Err(HarnessError::Config(format!("unknown scheme {other:?}"))),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        if self.vector_length == 0 || !self.vector_length.is_multiple_of(8) {
            return bad("vector_length must be a positive multiple of 8");
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return bad("threshold must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.genuine_flip_prob) {
            return bad("genuine_flip_prob must lie in [0, 1]");
        }
        if self.scheme.validate().is_err() {
            return bad("shamir needs 2 <= k <= n <= 255");
        }
        if self.replicas == 0 {
            return bad("replicas must be at least 1");
        }
        if self.challenge_ttl == 0 || self.tick_budget == 0 {
            return bad("challenge_ttl and tick_budget must be positive");
        }
        if self.latency == 0 {
            return bad("latency must be at least 1");
        }
        let r = &self.roster;
        if [&r.client, &r.issuer, &r.verifier].iter().any(|s| s.is_empty() || s.contains(char::is_whitespace)) {
            return bad("roster names must be non-empty and contain no whitespace");
        }
        if r.client == r.issuer || r.client == r.verifier || r.client == super::ADVERSARY_ID {
            return bad("the client must be distinct from the servers and the adversary");
        }
        Ok(())
    }

    /// Canonical `key = value` rendering; parses back to an equal config.
    pub fn to_text(&self) -> String {
        let (scheme, k, n) = match self.scheme {
            SharingScheme::Xor => ("xor", 2, 2),
            SharingScheme::Shamir { k, n } => ("shamir", k, n),
        };
        let mut out = format!(
            "seed = {}\nvector_length = {}\nthreshold = {}\ngenuine_flip_prob = {}\nscheme = {scheme}\nk = {k}\nn = {n}\n\
             mode = {}\nimpostor = {}\nroster = {},{},{}\nadversary = {}\nmitigation = {}\nchallenge_ttl = {}\n\
             tick_budget = {}\nlatency = {}\ntrust = {}\nreplicas = {}\n",
            self.seed,
            self.vector_length,
            self.threshold,
            self.genuine_flip_prob,
            mode_name(self.mode),
            self.impostor,
            self.roster.client,
            self.roster.issuer,
            self.roster.verifier,
            self.adversary,
            self.mitigation,
            self.challenge_ttl,
            self.tick_budget,
            self.latency,
            self.trust.name(),
            self.replicas,
        );
        if let Some(dir) = &self.state_dir {
            out.push_str(&format!("state_dir = {}\n", dir.display()));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_is_default() {
        assert_eq!(SimulationConfig::parse("").unwrap(), SimulationConfig::default());
        assert_eq!(SimulationConfig::parse("# nothing\n\n").unwrap(), SimulationConfig::default());
    }

    #[test]
    fn parses_every_key() {
        let cfg = SimulationConfig::parse(
            "seed = 9\nvector_length = 256 # bits\nthreshold = 0.25\ngenuine_flip_prob = 0.05\nscheme = shamir\n\
             k = 3\nn = 5\nmode = local\nimpostor = yes\nroster = alice, bank-a, bank-b\nadversary = share_spoof\n\
             mitigation = on\nchallenge_ttl = 7\ntick_budget = 500\nlatency = 2\ntrust = escrow\nreplicas = 2\n\
             state_dir = /tmp/x\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.vector_length, 256);
        assert_eq!(cfg.scheme, SharingScheme::Shamir { k: 3, n: 5 });
        assert_eq!(cfg.mode, AuthMode::Local);
        assert!(cfg.impostor && cfg.mitigation);
        assert_eq!(cfg.roster.verifier, "bank-b");
        assert_eq!(cfg.adversary, AdversaryKind::ShareSpoof);
        assert_eq!((cfg.challenge_ttl, cfg.tick_budget, cfg.latency, cfg.replicas), (7, 500, 2, 2));
        assert_eq!(cfg.trust, Trust::Escrow);
        assert_eq!(SimulationConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn rejects_bad_input() {
        for text in [
            "seed",
            "seed = x",
            "colour = red",
            "seed = 1\nseed = 2",
            "scheme = xor\nk = 3",
            "scheme = shamir\nk = 4\nn = 3",
            "scheme = aes",
            "threshold = 1.5",
            "vector_length = 12",
            "replicas = 0",
            "adversary = alien",
            "roster = a,b",
            "roster = issuer,issuer,verifier",
            "mode = sideways",
            "mitigation = maybe",
        ] {
            assert!(matches!(SimulationConfig::parse(text), Err(HarnessError::Config(_))), "{text:?}");
        }
    }

    #[test]
    fn adversary_names_round_trip() {
        for k in AdversaryKind::ALL {
            assert_eq!(k.name().parse::<AdversaryKind>().unwrap(), k);
        }
        assert_eq!("MitmObserve".parse::<AdversaryKind>().unwrap(), AdversaryKind::MitmObserve);
    }
}
