use serde::{Deserialize, Serialize};

use crate::protocol::{FailureReason, Passive};

use super::config::{AdversaryKind, SimulationConfig};
use super::scenario::Deployment;
use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorRates {
    pub trials: u64,
    pub false_rejects: u64,
    pub false_accepts: u64,
    pub frr: f64,
    pub far: f64,
}

/// Monte Carlo FRR and FAR. Each trial enrolls a fresh user, then runs one
/// genuine and one impostor authentication through the full flow in
/// `config.mode`. Adversary and state directory settings are ignored.
pub fn compute_error_rates(config: &SimulationConfig, trials: u64) -> Result<ErrorRates, HarnessError> {
    if trials == 0 {
        return Err(HarnessError::Config("trials must be at least 1".into()));
    }
    let config = SimulationConfig { adversary: AdversaryKind::None, state_dir: None, ..config.clone() };
    let (mut false_rejects, mut false_accepts) = (0, 0);
    for trial in 0..trials {
        let mut d = Deployment::for_trial(&config, trial)?;
        d.enroll(&mut Passive)?;
        let genuine = d.authenticate(config.mode, d.probe(false, 0)?, &mut Passive)?;
        if !genuine.accepted {
            if genuine.failure_reason != Some(FailureReason::BiometricMismatch) {
                return Err(HarnessError::Scenario(format!("trial {trial}: unexpected {genuine:?}")));
            }
            false_rejects += 1;
        }
        let impostor = d.authenticate(config.mode, d.probe(true, 0)?, &mut Passive)?;
        if impostor.accepted {
            false_accepts += 1;
        }
    }
    Ok(ErrorRates {
        trials,
        false_rejects,
        false_accepts,
        frr: false_rejects as f64 / trials as f64,
        far: false_accepts as f64 / trials as f64,
    })
}
