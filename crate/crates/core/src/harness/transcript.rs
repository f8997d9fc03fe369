use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::canonical;
use crate::crypto::Tick;
use crate::ledger::Did;
use crate::protocol::{AuthOutcome, Event};

/// Process exit status a run maps to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Accepted,
    Rejected,
    SecurityViolation,
}

impl Verdict {
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Accepted => 0,
            Verdict::Rejected => 2,
            Verdict::SecurityViolation => 3,
        }
    }

    pub fn of(outcome: &AuthOutcome) -> Self {
        match outcome.failure_reason {
            None if outcome.accepted => Verdict::Accepted,
            Some(r) if r.is_security_violation() => Verdict::SecurityViolation,
            _ => Verdict::Rejected,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Summary {
    pub seed: u64,
    pub scenario: String,
    pub adversary: String,
    pub mitigation: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub did: Option<Did>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<AuthOutcome>,
    /// Needle hits found by an observing adversary; absent when nobody
    /// looked.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leaks: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub final_tick: Tick,
    pub verdict: Verdict,
}

#[derive(Serialize)]
struct SummaryLine<'a> {
    summary: &'a Summary,
}

/// Append-only run record: every wire event, then one summary.
#[derive(Debug, Clone, PartialEq)]
pub struct Transcript {
    pub events: Vec<Event>,
    pub summary: Summary,
}

impl Transcript {
    pub fn verdict(&self) -> Verdict {
        self.summary.verdict
    }

    pub fn outcome(&self) -> Option<&AuthOutcome> {
        self.summary.outcome.as_ref()
    }

    /// One canonical object per line, summary last.
    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&canonical::to_canonical_string(e));
            out.push('\n');
        }
        out.push_str(&self.summary_line());
        out.push('\n');
        out
    }

    /// `{"summary":{...}}`, the final transcript line.
    pub fn summary_line(&self) -> String {
        canonical::to_canonical_string(&SummaryLine { summary: &self.summary })
    }

    pub fn write_to(&self, mut w: impl Write) -> io::Result<()> {
        w.write_all(self.to_lines().as_bytes())
    }

    /// Ticks never go backwards.
    pub fn is_monotonic(&self) -> bool {
        self.events.windows(2).all(|w| w[0].tick <= w[1].tick)
    }
}
