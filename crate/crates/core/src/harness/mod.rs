//! Deterministic simulation: builds a deployment from a
//! [`SimulationConfig`], runs enrollment and one authentication over the
//! simulated wire with an optional adversary, and records a [`Transcript`].
//! Also hosts the error-rate experiment and the ledger file check used by
//! the command-line tool.

pub mod adversary;
pub mod config;
mod rates;
mod scenario;
pub mod transcript;

pub use config::{AdversaryKind, Roster, SimulationConfig, Trust};
pub use rates::{compute_error_rates, ErrorRates};
pub use scenario::{hub_ids, run_enrollment, run_scenario, Deployment};
pub use transcript::{Summary, Transcript, Verdict};

use std::io;
use std::path::Path;

use crate::ledger::Ledger;
use crate::protocol::ProtocolError;

/// Actor id the adversary uses on the wire.
pub const ADVERSARY_ID: &str = "mallory";
/// Actor id for harness notes in transcripts.
pub const HARNESS_ID: &str = "harness";
/// Ledger export written into a state directory.
pub const LEDGER_FILE: &str = "ledger.json";

/// Exit status for configuration problems.
pub const EXIT_CONFIG: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("scenario: {0}")]
    Scenario(String),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Io(_) => EXIT_CONFIG,
            HarnessError::Scenario(_) | HarnessError::Protocol(_) => 1,
        }
    }
}

/// Reads an exported ledger and checks its hash chain. An empty file is a
/// valid empty ledger; a file that no longer parses is not valid.
pub fn verify_ledger_file(path: &Path) -> Result<bool, HarnessError> {
    let bytes = std::fs::read(path)?;
    Ok(Ledger::import(&bytes).is_ok_and(|l| l.verify_chain()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ledger_file_check() {
        let dir = tempfile::tempdir().unwrap();
        let empty = dir.path().join("empty.json");
        std::fs::write(&empty, b"").unwrap();
        assert!(verify_ledger_file(&empty).unwrap());

        let t = run_enrollment(&SimulationConfig {
            state_dir: Some(dir.path().to_path_buf()),
            ..SimulationConfig::default()
        })
        .unwrap();
        assert_eq!(t.verdict(), Verdict::Accepted);
        let path = dir.path().join(LEDGER_FILE);
        assert!(verify_ledger_file(&path).unwrap());
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[20] ^= 1;
        std::fs::write(&path, &bytes).unwrap();
        assert!(!verify_ledger_file(&path).unwrap());

        let missing = verify_ledger_file(&dir.path().join("nope")).unwrap_err();
        assert_eq!(missing.exit_code(), EXIT_CONFIG);
    }
}
