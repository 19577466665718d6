//! Built-in adversary scripts.
//!
//! Rule-only attacks act on honest traffic in flight. Active attacks add a
//! third party that intercepts every honest message and runs protocol roles
//! of its own: a split-key forwarder against the deadline protocol and a
//! password-guessing impersonator against the fuzzy-commitment protocol.

use num_bigint::BigUint;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::{
    Action, AdversaryScript, Ctx, Latency, Message, Party, PartyId, Rule, SessionRun, SimConfig, SimError, ATTACKER,
    DEVICE, HELPER,
};
use crate::crypto::{self, Group};
use crate::evidence::Evidence;
use crate::protocol::fc::{self, FcDevice, FcHelper, FcParams, PasswordSource};
use crate::protocol::zl::{self, ZlParams};
use crate::protocol::{party_rng, PairingOutcome, ProtocolKind, SessionReport, TimingScript};
use crate::sensing::UiType;

/// Mixed into the seed of the earlier session a replay captures from.
const REPLAY_SEED_SALT: u64 = 0x0005_eed0_f01d;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackKind {
    /// Observe only.
    PassiveEavesdrop,
    /// Sit between both sides with a separate key toward each.
    FullMitmSplitKeys,
    /// Send the device's commitment back to it and suppress the helper's.
    ReflectCommitment,
    /// Hold the device's commitment for 700 ms.
    DelayReplay,
    /// Impersonate the helper with one guessed password.
    OnlinePasswordGuess,
    /// Substitute a message captured in an earlier session.
    ReplayPreviousSession,
    /// Operate the helper side with imitated evidence.
    Mimicry,
}

impl AttackKind {
    pub const ALL: [AttackKind; 7] = [
        AttackKind::PassiveEavesdrop,
        AttackKind::FullMitmSplitKeys,
        AttackKind::ReflectCommitment,
        AttackKind::DelayReplay,
        AttackKind::OnlinePasswordGuess,
        AttackKind::ReplayPreviousSession,
        AttackKind::Mimicry,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AttackKind::PassiveEavesdrop => "passive-eavesdrop",
            AttackKind::FullMitmSplitKeys => "full-mitm-split-keys",
            AttackKind::ReflectCommitment => "reflect-commitment",
            AttackKind::DelayReplay => "delay-replay",
            AttackKind::OnlinePasswordGuess => "online-password-guess",
            AttackKind::ReplayPreviousSession => "replay-previous-session",
            AttackKind::Mimicry => "mimicry",
        }
    }

    /// Whether the attack is meaningful against `protocol`.
    pub fn applies_to(self, protocol: ProtocolKind) -> bool {
        match self {
            AttackKind::OnlinePasswordGuess => protocol == ProtocolKind::T2pair,
            _ => true,
        }
    }
}

impl std::str::FromStr for AttackKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AttackKind::ALL.into_iter().find(|a| a.name() == s).ok_or_else(|| format!("unknown attack {s:?}"))
    }
}

/// Everything needed to run one session under attack.
#[derive(Clone, Debug)]
pub struct AttackEnv {
    pub protocol: ProtocolKind,
    pub device: Evidence,
    pub helper: Evidence,
    /// Evidence the mimic produces in place of the helper's.
    pub mimic: Option<Evidence>,
    pub fc: FcParams,
    pub zl: ZlParams,
    pub timing: TimingScript,
    pub sim: SimConfig,
}

impl AttackEnv {
    pub fn new(protocol: ProtocolKind, device: Evidence, helper: Evidence, ui: UiType, sim: SimConfig) -> Self {
        let timing = TimingScript::from_evidence(&device, &helper);
        AttackEnv { protocol, device, helper, mimic: None, fc: FcParams::new(ui), zl: ZlParams::new(ui), timing, sim }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    pub attack: String,
    pub protocol: ProtocolKind,
    pub device: PairingOutcome,
    pub helper: PairingOutcome,
    /// The attacker ended up sharing a key with an honest party, or one
    /// honest party paired without its genuine peer.
    pub attacker_success: bool,
    pub run: SessionRun,
}

impl AttackResult {
    pub fn device_outcome(&self) -> &'static str {
        self.device.name()
    }

    pub fn helper_outcome(&self) -> &'static str {
        self.helper.name()
    }

    pub fn both_paired(&self) -> bool {
        self.device.is_paired() && self.helper.is_paired()
    }

    /// Guesses the device spent: password-masked first messages it sent.
    pub fn device_pake_attempts(&self) -> usize {
        self.run.sends().filter(|r| r.from == Some(DEVICE) && r.label.as_deref() == Some(fc::LABEL_PAKE1)).count()
    }
}

fn rule_script(name: &str, rules: Vec<Rule>) -> AdversaryScript {
    AdversaryScript { name: name.into(), rules, ..Default::default() }
}

fn commit_label(p: ProtocolKind) -> &'static str {
    match p {
        ProtocolKind::T2pair => fc::LABEL_COMMIT,
        ProtocolKind::T2pairpp => zl::LABEL_COMMIT,
    }
}

/// Label the replay attack substitutes: the first message bound to a fresh
/// session secret.
fn replay_label(p: ProtocolKind) -> &'static str {
    match p {
        ProtocolKind::T2pair => fc::LABEL_PAKE1,
        ProtocolKind::T2pairpp => zl::LABEL_COMMIT,
    }
}

fn run_protocol(
    env: &AttackEnv,
    helper: &Evidence,
    timing: &TimingScript,
    script: &AdversaryScript,
    attacker: Option<Box<dyn Party>>,
) -> Result<(SessionReport, Option<PairingOutcome>), SimError> {
    let with_attacker = attacker.is_some();
    let report = match env.protocol {
        ProtocolKind::T2pair => fc::run_t2pair(&env.device, helper, &env.fc, timing, &env.sim, script, attacker)?,
        ProtocolKind::T2pairpp => zl::run_t2pairpp(&env.device, helper, &env.zl, timing, &env.sim, script, attacker)?,
    };
    let attacker_outcome = if with_attacker { report.run.outcomes.get(ATTACKER).cloned().flatten() } else { None };
    Ok((report, attacker_outcome))
}

/// The script and optional attacker party for `kind`.
pub fn build_attack(kind: AttackKind, env: &AttackEnv) -> Result<(AdversaryScript, Option<Box<dyn Party>>), SimError> {
    let p = env.protocol;
    let attacker_timing = env.timing.with_offsets(0, 0);
    let rng = || party_rng(env.sim.seed, ATTACKER);
    let intercept = |name: &str| AdversaryScript { name: name.into(), intercept: true, ..Default::default() };
    Ok(match kind {
        AttackKind::PassiveEavesdrop | AttackKind::Mimicry => (rule_script(kind.name(), vec![]), None),
        AttackKind::ReflectCommitment => (
            rule_script(
                kind.name(),
                vec![
                    Rule::on(commit_label(p), DEVICE, Action::Reflect),
                    Rule::on(commit_label(p), HELPER, Action::Drop),
                ],
            ),
            None,
        ),
        AttackKind::DelayReplay => {
            (rule_script(kind.name(), vec![Rule::on(commit_label(p), DEVICE, Action::Delay { ms: 700 })]), None)
        }
        AttackKind::ReplayPreviousSession => {
            let mut earlier = env.clone();
            earlier.sim.seed = env.sim.seed ^ REPLAY_SEED_SALT;
            let (old, _) = run_protocol(&earlier, &env.helper, &env.timing, &AdversaryScript::honest(), None)?;
            let label = replay_label(p);
            let captured = old
                .run
                .sends()
                .find(|r| r.from == Some(DEVICE) && r.label.as_deref() == Some(label))
                .and_then(|r| r.payload_hex.as_deref())
                .and_then(|h| hex::decode(h).ok())
                .ok_or_else(|| SimError::Config(format!("earlier session sent no {label}")))?;
            (rule_script(kind.name(), vec![Rule::on(label, DEVICE, Action::Modify { body: captured })]), None)
        }
        AttackKind::FullMitmSplitKeys => {
            let party: Box<dyn Party> = match p {
                ProtocolKind::T2pairpp => Box::new(ZlMitm::new(env.zl.group, rng())),
                ProtocolKind::T2pair => {
                    let mut r = rng();
                    let rs = env.fc.code_for(env.device.len()).map_err(|e| SimError::Config(e.to_string()))?;
                    let guess_a = fc::random_word(&rs, &mut r);
                    let guess_b = fc::random_word(&rs, &mut r);
                    let r_b = ChaCha20Rng::from_rng(&mut r).expect("infallible source");
                    Box::new(FcMitm::new(&env.fc, &attacker_timing, guess_a, guess_b, r, r_b))
                }
            };
            (intercept(kind.name()), Some(party))
        }
        AttackKind::OnlinePasswordGuess => {
            if p != ProtocolKind::T2pair {
                return Err(SimError::Config("online password guessing targets the fuzzy-commitment protocol".into()));
            }
            let mut r = rng();
            let rs = env.fc.code_for(env.device.len()).map_err(|e| SimError::Config(e.to_string()))?;
            let guess = fc::random_word(&rs, &mut r);
            let party = FcHelper::new(PasswordSource::Fixed(guess), env.fc.clone(), &attacker_timing, r);
            (intercept(kind.name()), Some(Box::new(party) as Box<dyn Party>))
        }
    })
}

/// Runs one session of `env.protocol` under `kind`.
pub fn run_attack(kind: AttackKind, env: &AttackEnv) -> Result<AttackResult, SimError> {
    let (script, attacker) = build_attack(kind, env)?;
    let (helper, timing) = match kind {
        AttackKind::Mimicry => {
            let m = env.mimic.clone().ok_or_else(|| SimError::Config("mimicry needs attacker evidence".into()))?;
            let t = TimingScript::from_evidence(&env.device, &m);
            (m, TimingScript { compute_ms: env.timing.compute_ms, ..t })
        }
        _ => (env.helper.clone(), env.timing),
    };
    let (report, attacker_outcome) = run_protocol(env, &helper, &timing, &script, attacker)?;
    let honest_keys = [report.device.key(), report.helper.key()];
    let attacker_success = match kind {
        // The mimic operates the helper, so any device pairing is a win.
        AttackKind::Mimicry => report.device.is_paired(),
        _ => {
            let stolen =
                attacker_outcome.as_ref().and_then(|o| o.key()).is_some_and(|k| honest_keys.contains(&Some(k)));
            let lone = honest_keys.iter().any(|k| k.is_some()) && !report.both_paired_same_key();
            stolen || lone
        }
    };
    Ok(AttackResult {
        attack: kind.name().into(),
        protocol: env.protocol,
        device: report.device,
        helper: report.helper,
        attacker_success,
        run: report.run,
    })
}

/// Split-key forwarder against the deadline protocol: a separate
/// Diffie–Hellman exchange with each side, re-encrypting channel traffic
/// between them. The inner commitments are opaque to it and pass unchanged.
pub struct ZlMitm {
    group: crate::crypto::GroupId,
    rng: ChaCha20Rng,
    secrets: Option<(BigUint, BigUint)>,
    /// Channel keys toward the device and toward the helper.
    channels: [Option<[u8; 32]>; 2],
    pending: Vec<(PartyId, Message)>,
}

impl ZlMitm {
    pub fn new(group: crate::crypto::GroupId, rng: ChaCha20Rng) -> Self {
        ZlMitm { group, rng, secrets: None, channels: [None, None], pending: Vec::new() }
    }

    fn relay(&mut self, ctx: &mut Ctx, from: PartyId, msg: Message) {
        let to = super::peer_of(from);
        let (Some(src), Some(dst)) = (self.channels[from], self.channels[to]) else {
            self.pending.push((from, msg));
            return;
        };
        if let Some(plain) = crypto::open(&src, &msg.body) {
            ctx.send(to, &msg.label, crypto::seal(&dst, &plain, &mut self.rng));
        }
    }
}

impl Party for ZlMitm {
    fn on_start(&mut self, ctx: &mut Ctx) {
        let g = Group::get(self.group);
        let (a, b) = (g.random_exponent(&mut self.rng), g.random_exponent(&mut self.rng));
        ctx.send(DEVICE, zl::LABEL_DH2, g.encode(&g.public(&a)));
        ctx.send(HELPER, zl::LABEL_DH1, g.encode(&g.public(&b)));
        self.secrets = Some((a, b));
    }

    fn on_message(&mut self, ctx: &mut Ctx, from: PartyId, msg: Message) {
        let g = Group::get(self.group);
        let Some((a, b)) = &self.secrets else { return };
        let dh = match from {
            DEVICE => (msg.label == zl::LABEL_DH1).then_some(a),
            _ => (msg.label == zl::LABEL_DH2).then_some(b),
        };
        if let Some(secret) = dh {
            let peer = g.decode(&msg.body);
            if g.is_valid_public(&peer) && self.channels[from].is_none() {
                self.channels[from] = Some(zl::channel_key(&g.encode(&g.shared(&peer, secret))));
                for (f, m) in std::mem::take(&mut self.pending) {
                    self.relay(ctx, f, m);
                }
            }
            return;
        }
        self.relay(ctx, from, msg);
    }

    fn outcome(&self) -> Option<PairingOutcome> {
        None
    }
}

/// Man in the middle against the fuzzy-commitment protocol: a guessed-
/// password helper role toward the device and a guessed-password device
/// role toward the helper, with δ forwarded so the helper proceeds.
pub struct FcMitm {
    toward_device: FcHelper,
    toward_helper: FcDevice,
}

const FC_MITM_TIMER_BASE: u64 = 100;

impl FcMitm {
    pub fn new(
        params: &FcParams,
        timing: &TimingScript,
        guess_device_side: Vec<u16>,
        guess_helper_side: Vec<u16>,
        rng_a: ChaCha20Rng,
        rng_b: ChaCha20Rng,
    ) -> Self {
        FcMitm {
            toward_device: FcHelper::new(PasswordSource::Fixed(guess_device_side), params.clone(), timing, rng_a),
            toward_helper: FcDevice::new(PasswordSource::Fixed(guess_helper_side), params.clone(), timing, rng_b)
                .with_timer_base(FC_MITM_TIMER_BASE),
        }
    }
}

impl Party for FcMitm {
    fn on_start(&mut self, ctx: &mut Ctx) {
        self.toward_device.on_start(ctx);
        self.toward_helper.on_start(ctx);
    }

    fn on_message(&mut self, ctx: &mut Ctx, from: PartyId, msg: Message) {
        if from == DEVICE {
            if msg.label == fc::LABEL_COMMIT {
                ctx.send(HELPER, &msg.label, msg.body.clone());
            }
            self.toward_device.on_message(ctx, from, msg);
        } else {
            self.toward_helper.on_message(ctx, from, msg);
        }
    }

    fn on_timer(&mut self, ctx: &mut Ctx, id: u64) {
        if id >= FC_MITM_TIMER_BASE {
            self.toward_helper.on_timer(ctx, id);
        } else {
            self.toward_device.on_timer(ctx, id);
        }
    }

    /// Paired only when both faces paired.
    fn outcome(&self) -> Option<PairingOutcome> {
        match (self.toward_device.outcome(), self.toward_helper.outcome()) {
            (Some(a), Some(_)) => Some(a),
            _ => None,
        }
    }
}

/// A self-contained session description, loadable from JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub protocol: ProtocolKind,
    pub ui_type: UiType,
    pub device: Vec<u32>,
    pub helper: Vec<u32>,
    #[serde(default)]
    pub adversary: Option<AdversaryScript>,
    #[serde(default)]
    pub attack: Option<AttackKind>,
    #[serde(default)]
    pub latency: Latency,
    pub seed: u64,
}

impl Scenario {
    pub fn env(&self) -> Result<AttackEnv, SimError> {
        let ev = |iv: &[u32], origin| {
            Evidence::new(iv.to_vec(), self.ui_type, origin).map_err(|e| SimError::Config(e.to_string()))
        };
        let sim = SimConfig { latency: self.latency, ..SimConfig::with_seed(self.seed) };
        Ok(AttackEnv::new(
            self.protocol,
            ev(&self.device, crate::sensing::Origin::Device)?,
            ev(&self.helper, crate::sensing::Origin::Helper)?,
            self.ui_type,
            sim,
        ))
    }
}

/// Runs a scenario: a named attack if given, else its rule script (or an
/// honest channel).
pub fn run_scenario(s: &Scenario) -> Result<AttackResult, SimError> {
    let env = s.env()?;
    if let Some(kind) = s.attack {
        return run_attack(kind, &env);
    }
    let script = s.adversary.clone().unwrap_or_else(AdversaryScript::honest);
    let (report, _) = run_protocol(&env, &env.helper, &env.timing, &script, None)?;
    let attacker_success = !report.both_paired_same_key() && (report.device.is_paired() || report.helper.is_paired());
    Ok(AttackResult {
        attack: script.name.clone(),
        protocol: s.protocol,
        device: report.device,
        helper: report.helper,
        attacker_success,
        run: report.run,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{EncodingParams, RsParams};
    use crate::crypto::GroupId;
    use crate::evidence::EvidencePolicy;
    use crate::sensing::Origin;

    const BASE: [u32; 6] = [238, 1402, 300, 250, 900, 260];
    const NEAR: [u32; 6] = [241, 1398, 296, 255, 904, 262];

    fn env(protocol: ProtocolKind, seed: u64) -> AttackEnv {
        let d = Evidence::new(BASE.to_vec(), UiType::Button, Origin::Device).unwrap();
        let h = Evidence::new(NEAR.to_vec(), UiType::Button, Origin::Helper).unwrap();
        let mut e = AttackEnv::new(protocol, d, h, UiType::Button, SimConfig::with_seed(seed));
        e.fc.group = GroupId::Test512;
        e.zl.group = GroupId::Test512;
        e
    }

    fn toy_env(seed: u64) -> AttackEnv {
        let d = Evidence::new(vec![120, 260], UiType::Button, Origin::Device).unwrap();
        let h = Evidence::new(vec![121, 258], UiType::Button, Origin::Helper).unwrap();
        let mut e = AttackEnv::new(ProtocolKind::T2pair, d, h, UiType::Button, SimConfig::with_seed(seed));
        e.fc = FcParams {
            encoding: EncodingParams::faithful(20, 14),
            thr: 3,
            rs: Some(RsParams::new(4, 1, 7).unwrap()),
            group: GroupId::Test512,
            policy: EvidencePolicy { required_length: 2, pause_threshold_ms: 650, min_pauses: 0 },
            ..e.fc
        };
        e
    }

    #[test]
    fn passive_eavesdropper_learns_nothing() {
        for p in [ProtocolKind::T2pair, ProtocolKind::T2pairpp] {
            let r = run_attack(AttackKind::PassiveEavesdrop, &env(p, 1)).unwrap();
            assert!(r.device.is_paired() && r.helper.is_paired(), "{p}");
            assert!(!r.attacker_success);
            let text = r.run.transcript_jsonl();
            assert!(!text.contains(&hex::encode(r.device.key().unwrap())));
            let d = Evidence::new(BASE.to_vec(), UiType::Button, Origin::Device).unwrap();
            assert!(!text.contains(&hex::encode(d.to_bytes())));
        }
    }

    #[test]
    fn split_key_mitm_fails_on_both_protocols() {
        for seed in 0..5 {
            let r = run_attack(AttackKind::FullMitmSplitKeys, &env(ProtocolKind::T2pairpp, seed)).unwrap();
            assert!(
                r.device == PairingOutcome::AbortKeyMismatch || r.helper == PairingOutcome::AbortKeyMismatch,
                "{:?} {:?}",
                r.device,
                r.helper
            );
            assert!(!r.attacker_success);
            let f = run_attack(AttackKind::FullMitmSplitKeys, &env(ProtocolKind::T2pair, seed)).unwrap();
            assert!(!f.device.is_paired() && !f.helper.is_paired(), "{:?} {:?}", f.device, f.helper);
            assert!(!f.attacker_success);
        }
    }

    #[test]
    fn reflection_and_delay_abort_deadline_protocol() {
        let r = run_attack(AttackKind::ReflectCommitment, &env(ProtocolKind::T2pairpp, 2)).unwrap();
        assert_eq!(r.device, PairingOutcome::AbortReflection);
        let d = run_attack(AttackKind::DelayReplay, &env(ProtocolKind::T2pairpp, 2)).unwrap();
        assert_eq!(d.helper, PairingOutcome::AbortDeadline);
        assert!(!r.attacker_success && !d.attacker_success);
    }

    #[test]
    fn replayed_messages_do_not_pair() {
        for p in [ProtocolKind::T2pair, ProtocolKind::T2pairpp] {
            let r = run_attack(AttackKind::ReplayPreviousSession, &env(p, 3)).unwrap();
            assert!(!r.attacker_success, "{p}");
            assert!(!r.both_paired(), "{p}: {:?} {:?}", r.device, r.helper);
        }
    }

    #[test]
    fn wrong_guess_costs_exactly_one_attempt() {
        let r = run_attack(AttackKind::OnlinePasswordGuess, &env(ProtocolKind::T2pair, 4)).unwrap();
        assert!(matches!(r.device, PairingOutcome::AbortPake { .. }), "{:?}", r.device);
        assert_eq!(r.device_pake_attempts(), 1);
        assert!(!r.attacker_success);
        assert!(run_attack(AttackKind::OnlinePasswordGuess, &env(ProtocolKind::T2pairpp, 4)).is_err());
    }

    #[test]
    fn toy_password_space_is_guessable_at_chance() {
        let wins = (0..160)
            .filter(|&s| run_attack(AttackKind::OnlinePasswordGuess, &toy_env(s)).unwrap().attacker_success)
            .count();
        // 160 draws at p = 1/16: mean 10.
        assert!((2..=22).contains(&wins), "{wins}");
    }

    #[test]
    fn mimicry_with_exact_copy_pairs() {
        let mut e = env(ProtocolKind::T2pairpp, 5);
        e.mimic = Some(Evidence { origin: Origin::Helper, ..e.device.clone() });
        assert!(run_attack(AttackKind::Mimicry, &e).unwrap().attacker_success);
        e.mimic = Some(Evidence::new(vec![400, 900, 150, 480, 1700, 120], UiType::Button, Origin::Helper).unwrap());
        let r = run_attack(AttackKind::Mimicry, &e).unwrap();
        assert!(!r.attacker_success, "{:?}", r.device);
        e.mimic = None;
        assert!(run_attack(AttackKind::Mimicry, &e).is_err());
    }

    #[test]
    fn scenario_json_round_trip() {
        let s = Scenario {
            protocol: ProtocolKind::T2pairpp,
            ui_type: UiType::Button,
            device: BASE.to_vec(),
            helper: NEAR.to_vec(),
            adversary: Some(AdversaryScript {
                name: "late".into(),
                rules: vec![Rule::on(zl::LABEL_COMMIT, DEVICE, Action::Delay { ms: 700 })],
                ..Default::default()
            }),
            attack: None,
            latency: Latency::fixed(50),
            seed: 9,
        };
        let text = serde_json::to_string(&s).unwrap();
        let back: Scenario = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
        let r = run_scenario(&back).unwrap();
        assert_eq!(r.helper, PairingOutcome::AbortDeadline);
        assert_eq!(run_scenario(&back).unwrap().run.transcript_jsonl(), r.run.transcript_jsonl());
        assert_eq!("delay-replay".parse::<AttackKind>(), Ok(AttackKind::DelayReplay));
    }
}
