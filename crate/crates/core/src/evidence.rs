//! Interval evidence: the ordered time gaps between consecutive salient
//! points, plus the pause self-check both sides run before committing.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{self, CodecError, EncodingParams};
use crate::sensing::{Origin, SalientSequence, UiType};

#[derive(Debug, Error, PartialEq)]
pub enum EvidenceError {
    #[error("too few salient points: found {found}, need at least 2")]
    TooFewEvents { found: usize },
    #[error("interval {index} is not positive")]
    NonPositiveInterval { index: usize },
    #[error("evidence lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error(transparent)]
    Codec(#[from] CodecError),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Evidence {
    pub intervals: Vec<u32>,
    pub ui_type: UiType,
    pub origin: Origin,
}

impl Evidence {
    pub fn new(intervals: Vec<u32>, ui_type: UiType, origin: Origin) -> Result<Self, EvidenceError> {
        if let Some(index) = intervals.iter().position(|&i| i == 0) {
            return Err(EvidenceError::NonPositiveInterval { index });
        }
        Ok(Evidence { intervals, ui_type, origin })
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// Total duration covered by the intervals.
    pub fn span_ms(&self) -> u64 {
        self.intervals.iter().map(|&i| i as u64).sum()
    }

    /// Fixed big-endian wire form: u16 count then u32 per interval.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(2 + 4 * self.intervals.len());
        out.extend_from_slice(&(self.intervals.len() as u16).to_be_bytes());
        for i in &self.intervals {
            out.extend_from_slice(&i.to_be_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], ui_type: UiType, origin: Origin) -> Option<Self> {
        let (head, rest) = bytes.split_at_checked(2)?;
        let n = u16::from_be_bytes([head[0], head[1]]) as usize;
        if rest.len() != 4 * n {
            return None;
        }
        let intervals = rest.chunks_exact(4).map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]])).collect();
        Evidence::new(intervals, ui_type, origin).ok()
    }
}

/// Intervals between consecutive salient points, rounded to whole
/// milliseconds.
pub fn to_intervals(s: &SalientSequence) -> Result<Evidence, EvidenceError> {
    if s.timestamps.len() < 2 {
        return Err(EvidenceError::TooFewEvents { found: s.timestamps.len() });
    }
    let mut intervals = Vec::with_capacity(s.timestamps.len() - 1);
    for (k, w) in s.timestamps.windows(2).enumerate() {
        let d = (w[1] - w[0]).round();
        if d < 1.0 {
            return Err(EvidenceError::NonPositiveInterval { index: k });
        }
        intervals.push(d as u32);
    }
    Evidence::new(intervals, s.ui_type, s.source)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidencePolicy {
    pub required_length: usize,
    pub pause_threshold_ms: u32,
    pub min_pauses: usize,
}

impl EvidencePolicy {
    pub const DEFAULT_PAUSE_THRESHOLD_MS: u32 = 650;

    /// Operations with random pauses: 7 intervals for knobs, 6 otherwise.
    pub fn with_pauses(ui: UiType) -> Self {
        let required_length = match ui {
            UiType::Knob => 7,
            UiType::Button | UiType::Screen => 6,
        };
        EvidencePolicy { required_length, pause_threshold_ms: Self::DEFAULT_PAUSE_THRESHOLD_MS, min_pauses: 1 }
    }

    pub fn without_pauses() -> Self {
        EvidencePolicy { required_length: 8, pause_threshold_ms: Self::DEFAULT_PAUSE_THRESHOLD_MS, min_pauses: 0 }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.required_length < 2 {
            return Err(format!("required_length {} < 2", self.required_length));
        }
        if self.pause_threshold_ms == 0 {
            return Err("pause_threshold_ms must be positive".into());
        }
        if self.min_pauses > self.required_length {
            return Err(format!("min_pauses {} exceeds length {}", self.min_pauses, self.required_length));
        }
        Ok(())
    }

    pub fn count_pauses(&self, e: &Evidence) -> usize {
        e.intervals.iter().filter(|&&i| i >= self.pause_threshold_ms).count()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "failure", rename_all = "snake_case")]
pub enum SelfCheckFailure {
    WrongLength { expected: usize, actual: usize },
    NoPause { found: usize, required: usize },
    OutOfRange { index: usize, value: u32, max: u64 },
}

impl std::fmt::Display for SelfCheckFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SelfCheckFailure::WrongLength { expected, actual } => {
                write!(f, "expected {expected} intervals, extracted {actual}; repeat the operation")
            }
            SelfCheckFailure::NoPause { found, required } => {
                write!(f, "found {found} pause(s), need {required}; add one or more pauses")
            }
            SelfCheckFailure::OutOfRange { index, value, max } => {
                write!(f, "interval {index} lasts {value} ms, longer than the encodable {max} ms")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelfCheck {
    pub pause_count: usize,
    pub failures: Vec<SelfCheckFailure>,
}

impl SelfCheck {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

pub fn self_check(e: &Evidence, policy: &EvidencePolicy) -> SelfCheck {
    let mut failures = Vec::new();
    if e.len() != policy.required_length {
        failures.push(SelfCheckFailure::WrongLength { expected: policy.required_length, actual: e.len() });
    }
    let pause_count = policy.count_pauses(e);
    if pause_count < policy.min_pauses {
        failures.push(SelfCheckFailure::NoPause { found: pause_count, required: policy.min_pauses });
    }
    SelfCheck { pause_count, failures }
}

/// Whether the faithful encodings of `e1` and `e2` are within `thr` bits.
pub fn hamming_distance_ok(
    e1: &Evidence,
    e2: &Evidence,
    params: &EncodingParams,
    thr: usize,
) -> Result<bool, EvidenceError> {
    if e1.len() != e2.len() {
        return Err(EvidenceError::LengthMismatch { left: e1.len(), right: e2.len() });
    }
    let a = codec::encode_faithful(e1, params)?;
    let b = codec::encode_faithful(e2, params)?;
    Ok(codec::hamming(&a, &b)? <= thr)
}
