//! Deadline-based commitment pairing. The sides agree on a Diffie–Hellman
//! channel key K, then each commits Enc_w(K ‖ E) right after its operation
//! ends. A commitment arriving after the receiver's deadline is rejected, and
//! each opening key w is released only after the sender's own deadline.
//!
//! Messages: `zl/dh1` A, `zl/dh2` B (plain); `zl/commit` and `zl/open`
//! sealed under a key derived from K.

use num_bigint::BigUint;
use rand::RngCore;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::correlation::{self, Classifier};
use crate::crypto::{self, Group, GroupId};
use crate::evidence::{self, Evidence, EvidencePolicy};
use crate::protocol::{party_rng, PairingOutcome, SessionReport, TimingScript, DEFAULT_TIMEOUT_MS};
use crate::sensing::{Origin, UiType};
use crate::simnet::{
    self, peer_of, AdversaryScript, Ctx, Message, Party, PartyId, SimConfig, SimError, DEVICE, HELPER,
};

pub const LABEL_DH1: &str = "zl/dh1";
pub const LABEL_DH2: &str = "zl/dh2";
pub const LABEL_COMMIT: &str = "zl/commit";
pub const LABEL_OPEN: &str = "zl/open";

pub const DEFAULT_T_THR_MS: i64 = 600;

const TIMER_OP_END: u64 = 1;
const TIMER_DEADLINE: u64 = 2;
const TIMER_TIMEOUT: u64 = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZlParams {
    pub t_thr_ms: i64,
    pub group: GroupId,
    pub policy: EvidencePolicy,
    pub classifier: Classifier,
    pub timeout_ms: i64,
}

impl ZlParams {
    pub fn new(ui: UiType) -> Self {
        ZlParams {
            t_thr_ms: DEFAULT_T_THR_MS,
            group: GroupId::Modp2048,
            policy: EvidencePolicy::with_pauses(ui),
            classifier: Classifier::shipped(),
            timeout_ms: DEFAULT_TIMEOUT_MS,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.t_thr_ms < 0 {
            return Err("t_thr_ms must be non-negative".into());
        }
        self.policy.validate()?;
        self.classifier.validate().map_err(|e| e.to_string())
    }
}

/// Receiver-side deadline: accept iff t_receive ≤ t_end + T_thr.
pub fn zl_check_deadline(t_end: i64, t_receive: i64, t_thr: i64) -> bool {
    t_receive <= t_end + t_thr
}

/// Fails when the peer's commitment is byte-identical to our own.
pub fn zl_reflection_check(own: &[u8], peer: &[u8]) -> bool {
    own != peer
}

/// Commit(K ‖ E; w): AES-GCM under the fresh key w.
pub fn zl_commit<R: RngCore + ?Sized>(k: &[u8], e: &Evidence, w: &[u8; 32], rng: &mut R) -> Vec<u8> {
    let mut payload = k.to_vec();
    payload.extend(e.to_bytes());
    crypto::seal(w, &payload, rng)
}

/// Opens a commitment into (K′, E′); `key_len` is the fixed key width.
pub fn zl_open(
    commitment: &[u8],
    w: &[u8; 32],
    key_len: usize,
    ui: UiType,
    origin: Origin,
) -> Option<(Vec<u8>, Evidence)> {
    let plain = crypto::open(w, commitment)?;
    if plain.len() < key_len {
        return None;
    }
    let (k, rest) = plain.split_at(key_len);
    Some((k.to_vec(), Evidence::from_bytes(rest, ui, origin)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerifyFailure {
    OpenFailure,
    KeyMismatch,
    NoCorrelation,
}

impl VerifyFailure {
    fn outcome(self) -> PairingOutcome {
        match self {
            VerifyFailure::OpenFailure => PairingOutcome::AbortOpenFailure,
            VerifyFailure::KeyMismatch => PairingOutcome::AbortKeyMismatch,
            VerifyFailure::NoCorrelation => PairingOutcome::AbortNoCorrelation,
        }
    }
}

/// Opens the peer's commitment and checks the embedded key and the
/// correlation of the recovered evidence with our own.
pub fn zl_open_and_verify(
    peer_commitment: &[u8],
    w_peer: &[u8; 32],
    k_local: &[u8],
    own: &Evidence,
    classifier: &Classifier,
) -> Result<Evidence, VerifyFailure> {
    let origin = if own.origin == Origin::Device { Origin::Helper } else { Origin::Device };
    let (k, peer) =
        zl_open(peer_commitment, w_peer, k_local.len(), own.ui_type, origin).ok_or(VerifyFailure::OpenFailure)?;
    if k != k_local {
        return Err(VerifyFailure::KeyMismatch);
    }
    let f = correlation::features(&peer, own).map_err(|_| VerifyFailure::NoCorrelation)?;
    if !classifier.classify(&f).1 {
        return Err(VerifyFailure::NoCorrelation);
    }
    Ok(peer)
}

pub(crate) fn channel_key(k: &[u8]) -> [u8; 32] {
    crypto::derive_key(k, "pairlab/zl/channel")
}

pub struct ZlParty {
    role: PartyId,
    evidence: Evidence,
    params: ZlParams,
    op_end: i64,
    offset: i64,
    compute_ms: i64,
    rng: ChaCha20Rng,
    secret: Option<BigUint>,
    key: Option<Vec<u8>>,
    channel: Option<[u8; 32]>,
    op_over: bool,
    w: Option<[u8; 32]>,
    own_commit: Option<Vec<u8>>,
    peer_commit: Option<Vec<u8>>,
    released: bool,
    outcome: Option<PairingOutcome>,
}

impl ZlParty {
    pub fn new(role: PartyId, evidence: Evidence, params: ZlParams, timing: &TimingScript, rng: ChaCha20Rng) -> Self {
        ZlParty {
            role,
            evidence,
            params,
            op_end: timing.local_op_end(role),
            offset: timing.offset(role),
            compute_ms: timing.compute_ms,
            rng,
            secret: None,
            key: None,
            channel: None,
            op_over: false,
            w: None,
            own_commit: None,
            peer_commit: None,
            released: false,
            outcome: None,
        }
    }

    fn deadline(&self) -> i64 {
        self.op_end + self.params.t_thr_ms
    }

    fn finish(&mut self, o: PairingOutcome) {
        if self.outcome.is_none() {
            self.outcome = Some(o);
        }
    }

    fn peer(&self) -> PartyId {
        peer_of(self.role)
    }

    fn commit(&mut self, ctx: &mut Ctx) {
        let (Some(k), Some(ch)) = (&self.key, &self.channel) else { return };
        if self.own_commit.is_some() || !self.op_over {
            return;
        }
        let mut w = [0u8; 32];
        self.rng.fill_bytes(&mut w);
        let inner = zl_commit(k, &self.evidence, &w, &mut self.rng);
        let outer = crypto::seal(ch, &inner, &mut self.rng);
        ctx.send_after(self.compute_ms, self.peer(), LABEL_COMMIT, outer);
        ctx.note(serde_json::json!({ "commit_at": ctx.now() + self.compute_ms, "op_end": self.op_end, "deadline": self.deadline() }));
        self.w = Some(w);
        self.own_commit = Some(inner);
        self.maybe_release(ctx);
    }

    /// The device sends w1 once both commitments exist and its deadline has passed.
    fn maybe_release(&mut self, ctx: &mut Ctx) {
        if self.role != DEVICE || self.released || self.own_commit.is_none() || self.peer_commit.is_none() {
            return;
        }
        self.send_key(ctx);
        ctx.set_timer_at(ctx.now().max(self.deadline()) + self.params.timeout_ms, TIMER_TIMEOUT);
    }

    fn send_key(&mut self, ctx: &mut Ctx) {
        let (Some(ch), Some(w)) = (&self.channel, &self.w) else { return };
        let sealed = crypto::seal(ch, w, &mut self.rng);
        let at = ctx.now().max(self.deadline());
        ctx.note(serde_json::json!({ "release_at": at, "deadline": self.deadline() }));
        ctx.send_at(at, self.peer(), LABEL_OPEN, sealed);
        self.released = true;
    }

    fn on_public(&mut self, ctx: &mut Ctx, body: &[u8]) {
        if self.key.is_some() {
            return;
        }
        let Some(secret) = &self.secret else { return };
        let group = Group::get(self.params.group);
        let peer = group.decode(body);
        if body.len() != group.element_len() || !group.is_valid_public(&peer) {
            return;
        }
        let k = group.encode(&group.shared(&peer, secret));
        self.channel = Some(channel_key(&k));
        self.key = Some(k);
        self.commit(ctx);
    }

    fn on_commit(&mut self, ctx: &mut Ctx, body: &[u8]) {
        let Some(ch) = &self.channel else { return };
        let Some(inner) = crypto::open(ch, body) else { return };
        if self.peer_commit.is_some() {
            return;
        }
        if self.own_commit.as_deref().is_some_and(|own| !zl_reflection_check(own, &inner)) {
            self.finish(PairingOutcome::AbortReflection);
            return;
        }
        if self.role == HELPER {
            let t = ctx.now();
            ctx.note(serde_json::json!({ "commit_received_at": t, "deadline": self.deadline() }));
            if !zl_check_deadline(self.op_end, t, self.params.t_thr_ms) {
                self.finish(PairingOutcome::AbortDeadline);
                return;
            }
        }
        self.peer_commit = Some(inner);
        self.maybe_release(ctx);
    }

    fn on_open(&mut self, ctx: &mut Ctx, body: &[u8]) {
        let (Some(ch), Some(k)) = (self.channel, self.key.clone()) else { return };
        let Some(peer_commit) = self.peer_commit.clone() else { return };
        let Some(w) = crypto::open(&ch, body) else { return };
        let Ok(w): Result<[u8; 32], _> = w.try_into() else {
            self.finish(PairingOutcome::AbortOpenFailure);
            return;
        };
        if let Some(own) = &self.own_commit {
            // A peer commitment identical to ours is caught on receipt; this
            // guards the helper, which commits later than it may receive.
            if *own == peer_commit {
                self.finish(PairingOutcome::AbortReflection);
                return;
            }
        }
        match zl_open_and_verify(&peer_commit, &w, &k, &self.evidence, &self.params.classifier) {
            Err(f) => self.finish(f.outcome()),
            Ok(_) => {
                if self.role == HELPER {
                    if self.own_commit.is_none() {
                        return;
                    }
                    self.send_key(ctx);
                }
                self.finish(PairingOutcome::Paired { key: k });
            }
        }
    }
}

impl Party for ZlParty {
    fn on_start(&mut self, ctx: &mut Ctx) {
        let group = Group::get(self.params.group);
        let a = group.random_exponent(&mut self.rng);
        let label = if self.role == DEVICE { LABEL_DH1 } else { LABEL_DH2 };
        ctx.send(self.peer(), label, group.encode(&group.public(&a)));
        self.secret = Some(a);
        ctx.set_timer_at(self.op_end, TIMER_OP_END);
        if self.role == HELPER {
            ctx.set_timer_at(self.deadline() + 1, TIMER_DEADLINE);
        }
        ctx.set_timer_at(self.deadline() + self.params.timeout_ms, TIMER_TIMEOUT);
    }

    fn on_message(&mut self, ctx: &mut Ctx, _from: PartyId, msg: Message) {
        if self.outcome.is_some() {
            return;
        }
        let expected_dh = if self.role == DEVICE { LABEL_DH2 } else { LABEL_DH1 };
        match msg.label.as_str() {
            l if l == expected_dh => self.on_public(ctx, &msg.body),
            LABEL_COMMIT => self.on_commit(ctx, &msg.body),
            LABEL_OPEN => self.on_open(ctx, &msg.body),
            _ => {}
        }
    }

    fn on_timer(&mut self, ctx: &mut Ctx, id: u64) {
        if self.outcome.is_some() {
            return;
        }
        match id {
            TIMER_OP_END => {
                let check = evidence::self_check(&self.evidence, &self.params.policy);
                if !check.passed() {
                    ctx.note(serde_json::json!({ "self_check": check.failures }));
                    self.finish(PairingOutcome::AbortSelfCheck { failures: check.failures });
                    return;
                }
                self.op_over = true;
                self.commit(ctx);
            }
            TIMER_DEADLINE if self.peer_commit.is_none() => self.finish(PairingOutcome::AbortDeadline),
            TIMER_TIMEOUT => self.finish(PairingOutcome::AbortTimeout),
            _ => {}
        }
    }

    fn outcome(&self) -> Option<PairingOutcome> {
        self.outcome.clone()
    }

    fn clock_offset(&self) -> i64 {
        self.offset
    }
}

pub fn run_t2pairpp(
    device: &Evidence,
    helper: &Evidence,
    params: &ZlParams,
    timing: &TimingScript,
    sim: &SimConfig,
    script: &AdversaryScript,
    attacker: Option<Box<dyn Party>>,
) -> Result<SessionReport, SimError> {
    let mut parties: Vec<Box<dyn Party>> = vec![
        Box::new(ZlParty::new(DEVICE, device.clone(), params.clone(), timing, party_rng(sim.seed, DEVICE))),
        Box::new(ZlParty::new(HELPER, helper.clone(), params.clone(), timing, party_rng(sim.seed, HELPER))),
    ];
    parties.extend(attacker);
    simnet::run_session(parties, script, sim).map(SessionReport::from_run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simnet::{Action, EventType, Latency, Rule};
    use rand::SeedableRng;

    fn ev(iv: &[u32], origin: Origin) -> Evidence {
        Evidence::new(iv.to_vec(), UiType::Button, origin).unwrap()
    }

    const BASE: [u32; 6] = [238, 1402, 300, 250, 900, 260];

    fn fast() -> ZlParams {
        ZlParams { group: GroupId::Test512, ..ZlParams::new(UiType::Button) }
    }

    #[test]
    fn deadline_boundaries() {
        assert!(zl_check_deadline(5000, 5400, 600));
        assert!(zl_check_deadline(5000, 5600, 600));
        assert!(!zl_check_deadline(5000, 5601, 600));
    }

    #[test]
    fn reflection_check() {
        let c = vec![1u8, 2, 3];
        assert!(!zl_reflection_check(&c, &c));
        assert!(zl_reflection_check(&c, &[9, 9, 9]));
        assert!(zl_reflection_check(&c, &[1, 2, 4]));
    }

    #[test]
    fn commitment_round_trip() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let e = ev(&BASE, Origin::Device);
        let k = vec![7u8; 64];
        let w = [3u8; 32];
        let c = zl_commit(&k, &e, &w, &mut rng);
        let (k2, e2) = zl_open(&c, &w, 64, UiType::Button, Origin::Device).unwrap();
        assert_eq!((k2, e2), (k.clone(), e.clone()));
        assert!(zl_open(&c, &[4u8; 32], 64, UiType::Button, Origin::Device).is_none());
        assert_ne!(zl_commit(&k, &e, &[5u8; 32], &mut rng), c);
    }

    #[test]
    fn open_and_verify_paths() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let dev = ev(&BASE, Origin::Device);
        let helper = ev(&[240, 1398, 301, 252, 905, 258], Origin::Helper);
        let k = vec![1u8; 64];
        let w = [9u8; 32];
        let c = zl_commit(&k, &dev, &w, &mut rng);
        let cls = Classifier::baseline(50.0);
        assert_eq!(zl_open_and_verify(&c, &w, &k, &helper, &cls), Ok(dev.clone()));
        assert_eq!(zl_open_and_verify(&c, &w, &[2u8; 64], &helper, &cls), Err(VerifyFailure::KeyMismatch));
        let far = ev(&[900, 300, 1500, 700, 200, 1200], Origin::Helper);
        assert_eq!(zl_open_and_verify(&c, &w, &k, &far, &cls), Err(VerifyFailure::NoCorrelation));
        assert_eq!(zl_open_and_verify(&c, &[0u8; 32], &k, &helper, &cls), Err(VerifyFailure::OpenFailure));
    }

    fn session(script: &AdversaryScript, latency: Latency, seed: u64) -> SessionReport {
        let e = ev(&BASE, Origin::Device);
        let timing = TimingScript::from_evidence(&e, &e);
        let sim = SimConfig { latency, seed, ..Default::default() };
        run_t2pairpp(&e, &e, &fast(), &timing, &sim, script, None).unwrap()
    }

    #[test]
    fn honest_session_pairs_and_releases_after_deadline() {
        let r = session(&AdversaryScript::honest(), Latency::fixed(50), 3);
        assert!(r.both_paired_same_key());
        let op_end = 1000 + BASE.iter().sum::<u32>() as i64 + 200;
        for s in r.run.sends().filter(|s| s.label.as_deref() == Some(LABEL_OPEN)) {
            assert!(s.time >= op_end + 600);
        }
        assert_eq!(r.run.sends().filter(|s| s.label.as_deref() == Some(LABEL_OPEN)).count(), 2);
    }

    fn delayed_commit(extra: i64) -> SessionReport {
        let script = AdversaryScript {
            name: "delay".into(),
            rules: vec![Rule::on(LABEL_COMMIT, DEVICE, Action::Delay { ms: extra })],
            ..Default::default()
        };
        session(&script, Latency::fixed(50), 4)
    }

    #[test]
    fn deadline_tie_accepted_one_past_rejected() {
        // Commit sent at op_end + 1 (compute), arrives after 50 ms + extra.
        let on_time = delayed_commit(549);
        let note = on_time
            .run
            .transcript
            .iter()
            .find(|r| r.event == EventType::Note && r.detail.as_ref().unwrap().get("commit_received_at").is_some())
            .unwrap();
        let d = note.detail.as_ref().unwrap();
        assert_eq!(d["commit_received_at"].as_i64().unwrap(), d["deadline"].as_i64().unwrap());
        assert!(on_time.both_paired_same_key());
        let late = delayed_commit(550);
        assert_eq!(late.helper, PairingOutcome::AbortDeadline);
    }

    #[test]
    fn reflected_commitment_aborts_device() {
        let script = AdversaryScript {
            name: "reflect".into(),
            rules: vec![Rule::on(LABEL_COMMIT, DEVICE, Action::Reflect), Rule::on(LABEL_COMMIT, HELPER, Action::Drop)],
            ..Default::default()
        };
        let r = session(&script, Latency::default(), 5);
        assert_eq!(r.device, PairingOutcome::AbortReflection);
        assert!(!r.helper.is_paired());
    }

    #[test]
    fn self_check_failure() {
        let e = ev(&[100, 200, 300, 400, 500, 250], Origin::Device);
        let timing = TimingScript::from_evidence(&e, &e);
        let r =
            run_t2pairpp(&e, &e, &fast(), &timing, &SimConfig::default(), &AdversaryScript::honest(), None).unwrap();
        assert!(matches!(r.device, PairingOutcome::AbortSelfCheck { .. }));
    }

    #[test]
    fn uncorrelated_evidence_rejected() {
        let d = ev(&BASE, Origin::Device);
        let h = ev(&[700, 300, 1500, 900, 260, 1200], Origin::Helper);
        let timing = TimingScript::from_evidence(&d, &h);
        let r =
            run_t2pairpp(&d, &h, &fast(), &timing, &SimConfig::default(), &AdversaryScript::honest(), None).unwrap();
        assert_eq!(r.helper, PairingOutcome::AbortNoCorrelation);
        assert!(!r.device.is_paired());
    }

    #[test]
    fn clock_offsets_do_not_matter() {
        let e = ev(&BASE, Origin::Device);
        let timing = TimingScript::from_evidence(&e, &e).with_offsets(123_456, -7_000);
        let r =
            run_t2pairpp(&e, &e, &fast(), &timing, &SimConfig::with_seed(8), &AdversaryScript::honest(), None).unwrap();
        assert!(r.both_paired_same_key());
    }
}
