//! Pairing outcomes and session plumbing shared by both protocols.

pub mod fc;
pub mod zl;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::evidence::{Evidence, SelfCheckFailure};
use crate::simnet::{PartyId, SessionRun};

/// Logical time a party waits for the next protocol message before giving up.
pub const DEFAULT_TIMEOUT_MS: i64 = 5000;
/// Logical time at which the physical operation starts in simulated sessions.
pub const OPERATION_START_MS: i64 = 1000;
/// Margin after the last salient point before a party declares the operation over.
pub const END_MARGIN_MS: i64 = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PakeFailure {
    ChallengeMismatch,
    Timeout,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum PairingOutcome {
    Paired {
        #[serde(with = "crate::hexbytes")]
        key: Vec<u8>,
    },
    AbortSelfCheck {
        failures: Vec<SelfCheckFailure>,
    },
    AbortPake {
        cause: PakeFailure,
    },
    AbortDeadline,
    AbortReflection,
    AbortKeyMismatch,
    AbortNoCorrelation,
    AbortOpenFailure,
    AbortTimeout,
}

impl PairingOutcome {
    pub fn is_paired(&self) -> bool {
        matches!(self, PairingOutcome::Paired { .. })
    }

    pub fn key(&self) -> Option<&[u8]> {
        match self {
            PairingOutcome::Paired { key } => Some(key),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PairingOutcome::Paired { .. } => "paired",
            PairingOutcome::AbortSelfCheck { .. } => "abort_self_check",
            PairingOutcome::AbortPake { .. } => "abort_pake",
            PairingOutcome::AbortDeadline => "abort_deadline",
            PairingOutcome::AbortReflection => "abort_reflection",
            PairingOutcome::AbortKeyMismatch => "abort_key_mismatch",
            PairingOutcome::AbortNoCorrelation => "abort_no_correlation",
            PairingOutcome::AbortOpenFailure => "abort_open_failure",
            PairingOutcome::AbortTimeout => "abort_timeout",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolKind {
    T2pair,
    T2pairpp,
}

impl std::str::FromStr for ProtocolKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "t2pair" => Ok(ProtocolKind::T2pair),
            "t2pairpp" => Ok(ProtocolKind::T2pairpp),
            other => Err(format!("unknown protocol '{other}' (expected t2pair or t2pairpp)")),
        }
    }
}

impl std::fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ProtocolKind::T2pair => "t2pair",
            ProtocolKind::T2pairpp => "t2pairpp",
        })
    }
}

/// When each side finishes the physical operation, measured on simulator
/// time, plus local clock skews and per-party commitment cost.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimingScript {
    pub device_op_end: i64,
    pub helper_op_end: i64,
    pub device_clock_offset: i64,
    pub helper_clock_offset: i64,
    pub compute_ms: i64,
}

impl TimingScript {
    /// The operation starts at a fixed time; each side ends one margin after
    /// its own last salient point.
    pub fn from_evidence(device: &Evidence, helper: &Evidence) -> Self {
        TimingScript {
            device_op_end: OPERATION_START_MS + device.span_ms() as i64 + END_MARGIN_MS,
            helper_op_end: OPERATION_START_MS + helper.span_ms() as i64 + END_MARGIN_MS,
            device_clock_offset: 0,
            helper_clock_offset: 0,
            compute_ms: 1,
        }
    }

    pub fn with_offsets(mut self, device: i64, helper: i64) -> Self {
        self.device_clock_offset = device;
        self.helper_clock_offset = helper;
        self
    }

    /// Operation end on the given party's local clock.
    pub fn local_op_end(&self, party: PartyId) -> i64 {
        if party == crate::simnet::DEVICE {
            self.device_op_end + self.device_clock_offset
        } else {
            self.helper_op_end + self.helper_clock_offset
        }
    }

    pub fn offset(&self, party: PartyId) -> i64 {
        if party == crate::simnet::DEVICE {
            self.device_clock_offset
        } else {
            self.helper_clock_offset
        }
    }
}

/// Seeded CSPRNG for one party of one session.
pub fn party_rng(seed: u64, party: PartyId) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(party as u64 + 1);
    rng
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub device: PairingOutcome,
    pub helper: PairingOutcome,
    pub run: SessionRun,
}

impl SessionReport {
    pub fn from_run(run: SessionRun) -> Self {
        let get = |i: usize| run.outcomes[i].clone().expect("simulator finishes honest parties");
        SessionReport { device: get(0), helper: get(1), run }
    }

    pub fn both_paired_same_key(&self) -> bool {
        matches!((self.device.key(), self.helper.key()), (Some(a), Some(b)) if a == b)
    }
}
