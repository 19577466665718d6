//! Synthetic users, sessions and labeled evidence pairs.
//!
//! Intervals follow truncated normals: non-pause intervals N(μ1, σ1²) on
//! [100, 500] ms and pauses N(μ2, σ2²) on [800, 3000] ms, with pauses at
//! uniformly random positions. The device records the ground truth; the
//! helper sees each salient point shifted by sensing jitter N(0, σj²).

pub mod traces;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::correlation::{self, Classifier, LabeledFeatures, TrainConfig};
use crate::evidence::{self, Evidence, EvidencePolicy};
use crate::sensing::{Origin, SalientSequence, UiType};

pub use traces::{gen_traces, SessionTraces};

pub const NON_PAUSE_RANGE: (f64, f64) = (100.0, 500.0);
pub const PAUSE_RANGE: (f64, f64) = (800.0, 3000.0);
pub const MIMICRY_SIGMA_UNSKILLED: f64 = 300.0;
pub const MIMICRY_SIGMA_TRAINED: f64 = 60.0;
/// Skill at and above which the attacker reproduces the pause positions.
pub const MIMICRY_PAUSE_SKILL: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("bad policy: {0}")]
    BadPolicy(String),
    #[error("bad model: {0}")]
    BadModel(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserModel {
    pub mu1: f64,
    pub sigma1: f64,
    pub mu2: f64,
    pub sigma2: f64,
    pub sigma_j: f64,
    /// Multiplies both means; models users who operate faster or slower.
    pub tempo: f64,
}

impl UserModel {
    pub fn for_ui(ui: UiType) -> Self {
        let (sigma1, sigma2) = match ui {
            UiType::Button => (67.0, 501.0),
            UiType::Knob => (72.0, 362.0),
            UiType::Screen => (53.0, 424.0),
        };
        UserModel { mu1: 238.0, sigma1, mu2: 1402.0, sigma2, sigma_j: 5.0, tempo: 1.0 }
    }

    /// A population member: default parameters with a tempo in [0.85, 1.15].
    pub fn random_user<R: Rng + ?Sized>(ui: UiType, rng: &mut R) -> Self {
        UserModel { tempo: rng.gen_range(0.85..=1.15), ..UserModel::for_ui(ui) }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let positive = [self.mu1, self.sigma1, self.mu2, self.sigma2, self.tempo];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) || !self.sigma_j.is_finite() || self.sigma_j < 0.0 {
            return Err(SynthError::BadModel(format!("{self:?}")));
        }
        Ok(())
    }
}

/// Draws from N(mean, sd²) restricted to [lo, hi] by rejection; falls back
/// to clamping when the window is far in a tail.
pub fn truncated_normal<R: Rng + ?Sized>(rng: &mut R, mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    if sd <= 0.0 {
        return mean.clamp(lo, hi);
    }
    let n = Normal::new(mean, sd).expect("finite sd");
    for _ in 0..1000 {
        let x = n.sample(rng);
        if (lo..=hi).contains(&x) {
            return x;
        }
    }
    mean.clamp(lo, hi)
}

fn check_policy(policy: &EvidencePolicy) -> Result<(), SynthError> {
    policy.validate().map_err(SynthError::BadPolicy)
}

/// Ground truth of one operation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub ui_type: UiType,
    /// Salient times on the device clock.
    pub device_times: Vec<u64>,
    /// The same salient points as the helper perceives them, on its clock.
    pub helper_times: Vec<f64>,
    pub pause_positions: Vec<usize>,
    pub device: Evidence,
    pub helper: Evidence,
}

/// Interval count per pause count: one or two pauses when required.
fn draw_pause_positions<R: Rng + ?Sized>(policy: &EvidencePolicy, rng: &mut R) -> Vec<usize> {
    let n = policy.required_length;
    if policy.min_pauses == 0 {
        return Vec::new();
    }
    let hi = policy.min_pauses.max(2).min(n);
    let count = rng.gen_range(policy.min_pauses..=hi);
    let mut pos = index::sample(rng, n, count).into_vec();
    pos.sort_unstable();
    pos
}

fn draw_intervals<R: Rng + ?Sized>(model: &UserModel, n: usize, pauses: &[usize], rng: &mut R) -> Vec<u32> {
    (0..n)
        .map(|k| {
            let x = if pauses.contains(&k) {
                truncated_normal(rng, model.mu2 * model.tempo, model.sigma2, PAUSE_RANGE.0, PAUSE_RANGE.1)
            } else {
                truncated_normal(rng, model.mu1 * model.tempo, model.sigma1, NON_PAUSE_RANGE.0, NON_PAUSE_RANGE.1)
            };
            x.round() as u32
        })
        .collect()
}

/// Helper-perceived times: truth plus jitter clipped to ±3σj, kept strictly increasing.
fn jitter_times<R: Rng + ?Sized>(truth: &[u64], sigma_j: f64, offset: f64, rng: &mut R) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::with_capacity(truth.len());
    for &t in truth {
        let j = truncated_normal(rng, 0.0, sigma_j, -3.0 * sigma_j, 3.0 * sigma_j);
        let mut h = t as f64 + j + offset;
        if let Some(&prev) = out.last() {
            if h <= prev + 1.0 {
                h = prev + 1.0;
            }
        }
        out.push(h);
    }
    out
}

fn session_from_intervals<R: Rng + ?Sized>(
    ui: UiType,
    intervals: &[u32],
    pauses: Vec<usize>,
    sigma_j: f64,
    rng: &mut R,
) -> Session {
    let start: u64 = rng.gen_range(2600..3400);
    let mut device_times = vec![start];
    for &i in intervals {
        device_times.push(device_times.last().unwrap() + i as u64);
    }
    let offset = rng.gen_range(0..1_000_000) as f64;
    let helper_times = jitter_times(&device_times, sigma_j, offset, rng);
    let device = Evidence::new(intervals.to_vec(), ui, Origin::Device).expect("positive intervals");
    let helper = evidence::to_intervals(&SalientSequence {
        timestamps: helper_times.clone(),
        source: Origin::Helper,
        ui_type: ui,
    })
    .expect("increasing helper times");
    Session { ui_type: ui, device_times, helper_times, pause_positions: pauses, device, helper }
}

pub fn gen_session_rng<R: Rng + ?Sized>(
    model: &UserModel,
    ui: UiType,
    policy: &EvidencePolicy,
    rng: &mut R,
) -> Result<Session, SynthError> {
    model.validate()?;
    check_policy(policy)?;
    let pauses = draw_pause_positions(policy, rng);
    let intervals = draw_intervals(model, policy.required_length, &pauses, rng);
    Ok(session_from_intervals(ui, &intervals, pauses, model.sigma_j, rng))
}

pub fn gen_session(model: &UserModel, ui: UiType, policy: &EvidencePolicy, seed: u64) -> Result<Session, SynthError> {
    gen_session_rng(model, ui, policy, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Device evidence of user A against helper evidence of user B.
pub fn gen_negative_pair(
    model_a: &UserModel,
    seed_a: u64,
    model_b: &UserModel,
    seed_b: u64,
    ui: UiType,
    policy: &EvidencePolicy,
) -> Result<(Evidence, Evidence), SynthError> {
    let a = gen_session(model_a, ui, policy, seed_a)?;
    let b = gen_session(model_b, ui, policy, seed_b)?;
    Ok((a.device, b.helper))
}

/// Timing-error scale of a mimic at `skill` ∈ [0, 1].
pub fn mimicry_sigma(skill: f64) -> f64 {
    let s = skill.clamp(0.0, 1.0);
    MIMICRY_SIGMA_UNSKILLED + (MIMICRY_SIGMA_TRAINED - MIMICRY_SIGMA_UNSKILLED) * s
}

/// Attacker evidence imitating `victim`. Each interval i is reproduced with
/// error N(0, (σm · i / μ1)²): σm is the error on a typical non-pause
/// interval and grows in proportion to the length being imitated. Below
/// [`MIMICRY_PAUSE_SKILL`] the attacker does not know where the pauses were
/// and places them at random.
pub fn mimic_evidence<R: Rng + ?Sized>(
    victim: &Session,
    model: &UserModel,
    skill: f64,
    sigma_override: Option<f64>,
    rng: &mut R,
) -> Evidence {
    let sigma_m = sigma_override.unwrap_or_else(|| mimicry_sigma(skill));
    let n = victim.device.len();
    let base: Vec<u32> = if skill >= MIMICRY_PAUSE_SKILL || victim.pause_positions.is_empty() {
        victim.device.intervals.clone()
    } else {
        let mut pos = index::sample(rng, n, victim.pause_positions.len()).into_vec();
        pos.sort_unstable();
        draw_intervals(model, n, &pos, rng)
    };
    let intervals = base
        .iter()
        .map(|&i| {
            let sd = sigma_m * i as f64 / model.mu1;
            let x = if sd > 0.0 { i as f64 + Normal::new(0.0, sd).expect("finite").sample(rng) } else { i as f64 };
            x.round().clamp(1.0, PAUSE_RANGE.1 + 100.0) as u32
        })
        .collect();
    Evidence::new(intervals, victim.ui_type, Origin::Helper).expect("clamped positive")
}

pub fn gen_mimicry_pair(
    victim: &UserModel,
    skill: f64,
    ui: UiType,
    policy: &EvidencePolicy,
    seed: u64,
) -> Result<(Evidence, Evidence), SynthError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let session = gen_session_rng(victim, ui, policy, &mut rng)?;
    let attacker = mimic_evidence(&session, victim, skill, None, &mut rng);
    Ok((session.device, attacker))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PairLabel {
    Positive,
    Negative,
    Mimicry { skill: f64 },
}

impl PairLabel {
    /// +1 for legitimate pairs, −1 otherwise.
    pub fn sign(&self) -> i8 {
        match self {
            PairLabel::Positive => 1,
            _ => -1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub pair_id: u64,
    pub label: i8,
    pub pair: PairLabel,
    pub ui_type: UiType,
    pub device: Vec<u32>,
    pub helper: Vec<u32>,
    pub model: UserModel,
    pub seed: u64,
}

impl PairRecord {
    pub fn device_evidence(&self) -> Evidence {
        Evidence { intervals: self.device.clone(), ui_type: self.ui_type, origin: Origin::Device }
    }

    pub fn helper_evidence(&self) -> Evidence {
        Evidence { intervals: self.helper.clone(), ui_type: self.ui_type, origin: Origin::Helper }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub ui_type: UiType,
    pub policy: EvidencePolicy,
    pub positives: usize,
    pub negatives: usize,
    /// Mimicry pairs per listed skill level.
    #[serde(default)]
    pub mimicry: usize,
    #[serde(default)]
    pub skills: Vec<f64>,
    pub sigma_j: f64,
    pub seed: u64,
}

impl DatasetSpec {
    pub fn new(ui: UiType, policy: EvidencePolicy, positives: usize, negatives: usize, seed: u64) -> Self {
        DatasetSpec {
            ui_type: ui,
            policy,
            positives,
            negatives,
            mimicry: 0,
            skills: Vec::new(),
            sigma_j: UserModel::for_ui(ui).sigma_j,
            seed,
        }
    }

    pub fn len(&self) -> usize {
        self.positives + self.negatives + self.mimicry * self.skills.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Independent stream per pair so records can be built in any order.
pub fn pair_rng(seed: u64, pair_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(pair_id);
    rng
}

/// Builds record `pair_id` of the dataset: positives first, then
/// negatives, then mimicry pairs grouped by skill.
pub fn gen_record(spec: &DatasetSpec, pair_id: u64) -> Result<PairRecord, SynthError> {
    check_policy(&spec.policy)?;
    let mut rng = pair_rng(spec.seed, pair_id);
    let ui = spec.ui_type;
    let mut user = UserModel::random_user(ui, &mut rng);
    user.sigma_j = spec.sigma_j;
    let id = pair_id as usize;
    let (pair, device, helper) = if id < spec.positives {
        let s = gen_session_rng(&user, ui, &spec.policy, &mut rng)?;
        (PairLabel::Positive, s.device, s.helper)
    } else if id < spec.positives + spec.negatives {
        let mut other = UserModel::random_user(ui, &mut rng);
        other.sigma_j = spec.sigma_j;
        let a = gen_session_rng(&user, ui, &spec.policy, &mut rng)?;
        let b = gen_session_rng(&other, ui, &spec.policy, &mut rng)?;
        (PairLabel::Negative, a.device, b.helper)
    } else if id < spec.len() {
        let k = (id - spec.positives - spec.negatives) / spec.mimicry;
        let skill = spec.skills[k];
        let s = gen_session_rng(&user, ui, &spec.policy, &mut rng)?;
        let attacker = mimic_evidence(&s, &user, skill, None, &mut rng);
        (PairLabel::Mimicry { skill }, s.device, attacker)
    } else {
        return Err(SynthError::BadPolicy(format!("pair {pair_id} beyond dataset of {}", spec.len())));
    };
    Ok(PairRecord {
        pair_id,
        label: pair.sign(),
        pair,
        ui_type: ui,
        device: device.intervals,
        helper: helper.intervals,
        model: user,
        seed: spec.seed,
    })
}

pub fn gen_dataset(spec: &DatasetSpec) -> Result<Vec<PairRecord>, SynthError> {
    (0..spec.len() as u64).map(|i| gen_record(spec, i)).collect()
}

/// Seed of the data the shipped classifier was fitted on.
pub const CLASSIFIER_TRAINING_SEED: u64 = 0x7a11_2024;
pub const CLASSIFIER_PAIRS_PER_CLASS: usize = 1000;

/// Positive and negative pairs for every UI type, with and without pauses.
pub fn classifier_training_set(pairs_per_class: usize, seed: u64) -> Result<Vec<LabeledFeatures>, SynthError> {
    let mut out = Vec::new();
    for (k, ui) in UiType::ALL.into_iter().enumerate() {
        for (j, policy) in [EvidencePolicy::with_pauses(ui), EvidencePolicy::without_pauses()].into_iter().enumerate() {
            let spec = DatasetSpec::new(ui, policy, pairs_per_class, pairs_per_class, seed + (2 * k + j) as u64);
            for r in gen_dataset(&spec)? {
                let f =
                    correlation::labeled(&r.device_evidence(), &r.helper_evidence(), r.label).expect("equal lengths");
                out.push(f);
            }
        }
    }
    Ok(out)
}

/// Refits the shipped classifier from scratch.
pub fn train_reference_classifier() -> Classifier {
    let data = classifier_training_set(CLASSIFIER_PAIRS_PER_CLASS, CLASSIFIER_TRAINING_SEED).expect("valid specs");
    correlation::train(&data, &TrainConfig::default()).expect("both classes present")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::EncodingParams;

    fn moments(xs: &[f64]) -> (f64, f64, f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        let skew = xs.iter().map(|x| ((x - m) / sd).powi(3)).sum::<f64>() / n;
        let kurt = xs.iter().map(|x| ((x - m) / sd).powi(4)).sum::<f64>() / n - 3.0;
        (m, sd, skew, kurt)
    }

    #[test]
    fn zero_jitter_gives_identical_evidence() {
        let model = UserModel { sigma_j: 0.0, ..UserModel::for_ui(UiType::Button) };
        for seed in 0..50 {
            let s = gen_session(&model, UiType::Button, &EvidencePolicy::with_pauses(UiType::Button), seed).unwrap();
            assert_eq!(s.device.intervals, s.helper.intervals);
        }
    }

    #[test]
    fn sessions_are_reproducible() {
        let m = UserModel::for_ui(UiType::Knob);
        let p = EvidencePolicy::with_pauses(UiType::Knob);
        assert_eq!(gen_session(&m, UiType::Knob, &p, 9).unwrap(), gen_session(&m, UiType::Knob, &p, 9).unwrap());
        assert_ne!(gen_session(&m, UiType::Knob, &p, 9).unwrap(), gen_session(&m, UiType::Knob, &p, 10).unwrap());
    }

    #[test]
    fn lengths_and_self_check() {
        for ui in UiType::ALL {
            let m = UserModel::for_ui(ui);
            for policy in [EvidencePolicy::with_pauses(ui), EvidencePolicy::without_pauses()] {
                for seed in 0..200 {
                    let s = gen_session(&m, ui, &policy, seed).unwrap();
                    assert_eq!(s.device.len(), policy.required_length);
                    assert_eq!(s.helper.len(), policy.required_length);
                    assert!(evidence::self_check(&s.device, &policy).passed());
                }
            }
        }
    }

    #[test]
    fn interval_samples_look_normal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xs: Vec<f64> = (0..20_000).map(|_| truncated_normal(&mut rng, 238.0, 67.0, 100.0, 500.0)).collect();
        let (m, sd, skew, kurt) = moments(&xs);
        assert!((m - 238.0).abs() < 5.0, "{m}");
        assert!((sd - 67.0).abs() < 5.0, "{sd}");
        assert!(skew.abs() < 0.3 && kurt.abs() < 0.5, "{skew} {kurt}");
        let ys: Vec<f64> = (0..20_000).map(|_| truncated_normal(&mut rng, 1402.0, 501.0, 800.0, 3000.0)).collect();
        let (_, _, skew2, kurt2) = moments(&ys);
        assert!(skew2.abs() < 1.0 && kurt2.abs() < 1.5, "{skew2} {kurt2}");
        assert!(ys.iter().all(|y| (800.0..=3000.0).contains(y)));
    }

    #[test]
    fn positive_pairs_mostly_within_paper_scale_thr() {
        let p = EvidencePolicy::with_pauses(UiType::Button);
        let enc = EncodingParams::default();
        let m = UserModel::for_ui(UiType::Button);
        let ok = (0..1000)
            .filter(|&seed| {
                let s = gen_session(&m, UiType::Button, &p, seed).unwrap();
                evidence::hamming_distance_ok(&s.device, &s.helper, &enc, 16).unwrap()
            })
            .count();
        assert!(ok >= 900, "{ok}");
    }

    #[test]
    fn negative_pair_controls() {
        let m = UserModel::for_ui(UiType::Button);
        let p = EvidencePolicy::with_pauses(UiType::Button);
        let (d, h) = gen_negative_pair(&m, 4, &m, 4, UiType::Button, &p).unwrap();
        let s = gen_session(&m, UiType::Button, &p, 4).unwrap();
        assert_eq!((d, h), (s.device, s.helper));
        let c = Classifier::shipped();
        let rejected = (0..500u64)
            .filter(|&i| {
                let (d, h) = gen_negative_pair(&m, 2 * i, &m, 2 * i + 1, UiType::Button, &p).unwrap();
                !c.classify(&correlation::features(&d, &h).unwrap()).1
            })
            .count();
        assert!(rejected >= 475, "{rejected}");
    }

    #[test]
    fn mimicry_oracle_attacker_matches_victim() {
        let m = UserModel::for_ui(UiType::Button);
        let p = EvidencePolicy::with_pauses(UiType::Button);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = gen_session_rng(&m, UiType::Button, &p, &mut rng).unwrap();
        let a = mimic_evidence(&s, &m, 1.0, Some(0.0), &mut rng);
        assert_eq!(a.intervals, s.device.intervals);
        assert_eq!(mimicry_sigma(0.0), 300.0);
        assert_eq!(mimicry_sigma(1.0), 60.0);
    }

    #[test]
    fn mimicry_skill_ordering() {
        let m = UserModel::for_ui(UiType::Button);
        let c = Classifier::shipped();
        let rate = |skill: f64, policy: &EvidencePolicy| {
            (0..600u64)
                .filter(|&seed| {
                    let (d, a) = gen_mimicry_pair(&m, skill, UiType::Button, policy, seed).unwrap();
                    c.classify(&correlation::features(&d, &a).unwrap()).1
                })
                .count() as f64
                / 600.0
        };
        let trained_free = rate(1.0, &EvidencePolicy::without_pauses());
        let untrained_free = rate(0.0, &EvidencePolicy::without_pauses());
        let untrained_paused = rate(0.0, &EvidencePolicy::with_pauses(UiType::Button));
        let trained_paused = rate(1.0, &EvidencePolicy::with_pauses(UiType::Button));
        assert!(trained_free > untrained_free, "{trained_free} vs {untrained_free}");
        assert!(trained_free > trained_paused, "{trained_free} vs {trained_paused}");
        assert!(untrained_paused < 0.01, "{untrained_paused}");
    }

    #[test]
    fn dataset_layout_and_determinism() {
        let mut spec = DatasetSpec::new(UiType::Screen, EvidencePolicy::with_pauses(UiType::Screen), 5, 4, 77);
        spec.mimicry = 3;
        spec.skills = vec![0.0, 1.0];
        let d = gen_dataset(&spec).unwrap();
        assert_eq!(d.len(), 15);
        assert_eq!(d.iter().filter(|r| r.label == 1).count(), 5);
        assert_eq!(d[9].pair, PairLabel::Mimicry { skill: 0.0 });
        assert_eq!(d[14].pair, PairLabel::Mimicry { skill: 1.0 });
        assert_eq!(gen_record(&spec, 7).unwrap(), d[7]);
        assert_eq!(gen_dataset(&spec).unwrap(), d);
        let line = serde_json::to_string(&d[12]).unwrap();
        assert_eq!(serde_json::from_str::<PairRecord>(&line).unwrap(), d[12]);
        assert!(gen_record(&spec, 15).is_err());
    }

    /// Set PAIRLAB_REGEN=1 to rewrite the shipped parameters.
    #[test]
    fn shipped_classifier_is_reproducible() {
        let fresh = train_reference_classifier();
        if std::env::var("PAIRLAB_REGEN").is_ok_and(|v| v == "1") {
            let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/classifier_v1.json");
            std::fs::write(path, serde_json::to_string_pretty(&fresh).unwrap() + "\n").unwrap();
            return;
        }
        let shipped = Classifier::shipped();
        assert_eq!(fresh.kind, shipped.kind);
        for (a, b) in fresh.weights.iter().zip(&shipped.weights) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
        assert!((fresh.bias - shipped.bias).abs() < 1e-9);
    }
}
