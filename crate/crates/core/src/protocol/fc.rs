//! Fuzzy-commitment pairing: the device commits a random password with its
//! encoded evidence, the helper decommits with its own evidence, and both
//! run a password-authenticated Diffie–Hellman exchange with mutual
//! challenge confirmation.
//!
//! Messages, in order:
//! `fc/commit` δ = e(E) ⊕ RS(P);
//! `fc/pake1` A masked under h(P);
//! `fc/pake2` B ‖ C1 masked under h(P′);
//! `fc/pake3` AEAD_K(C1 ‖ C2);
//! `fc/pake4` AEAD_K′(C2).
//!
//! The password-keyed messages use an unauthenticated keystream over
//! fixed-width group elements: an authenticated cipher there would let an
//! eavesdropper test password candidates offline.

use num_bigint::BigUint;
use rand::{Rng, RngCore};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{self, BitEncoding, CodecError, EncodingParams, RsParams};
use crate::crypto::{self, Group, GroupId};
use crate::evidence::{self, Evidence, EvidencePolicy, SelfCheckFailure};
use crate::protocol::{party_rng, PairingOutcome, PakeFailure, SessionReport, TimingScript, DEFAULT_TIMEOUT_MS};
use crate::sensing::UiType;
use crate::simnet::{self, AdversaryScript, Ctx, Message, Party, PartyId, SimConfig, SimError, DEVICE, HELPER};

pub const LABEL_COMMIT: &str = "fc/commit";
pub const LABEL_PAKE1: &str = "fc/pake1";
pub const LABEL_PAKE2: &str = "fc/pake2";
pub const LABEL_PAKE3: &str = "fc/pake3";
pub const LABEL_PAKE4: &str = "fc/pake4";

const TIMER_OP_END: u64 = 1;
const TIMER_TIMEOUT: u64 = 2;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FcParams {
    pub encoding: EncodingParams,
    /// Correctable symbol errors.
    pub thr: usize,
    pub min_symbol_bits: u32,
    /// Explicit code; derived from the evidence length when absent.
    pub rs: Option<RsParams>,
    pub group: GroupId,
    pub policy: EvidencePolicy,
    pub challenge_len: usize,
    pub timeout_ms: i64,
}

impl FcParams {
    pub fn new(ui: UiType) -> Self {
        FcParams {
            encoding: EncodingParams::default(),
            thr: 16,
            min_symbol_bits: 8,
            rs: None,
            group: GroupId::Modp2048,
            policy: EvidencePolicy::with_pauses(ui),
            challenge_len: 16,
            timeout_ms: DEFAULT_TIMEOUT_MS,
        }
    }

    /// Code for evidence of `intervals` intervals.
    pub fn code_for(&self, intervals: usize) -> Result<RsParams, CodecError> {
        match self.rs {
            Some(rs) => {
                rs.validate()?;
                Ok(rs)
            }
            None => codec::rs_params_for(intervals * self.encoding.segment_len(), self.thr, self.min_symbol_bits),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        self.encoding.validate().map_err(|e| e.to_string())?;
        self.policy.validate()?;
        self.code_for(self.policy.required_length).map_err(|e| e.to_string())?;
        if self.challenge_len == 0 {
            return Err("challenge_len must be positive".into());
        }
        Ok(())
    }
}

fn padded_encoding(e: &Evidence, params: &FcParams, rs: &RsParams) -> Result<BitEncoding, CodecError> {
    let enc = codec::encode(e, &params.encoding)?;
    let width = rs.code_len * rs.symbol_bits as usize;
    if enc.len() > width {
        return Err(CodecError::BadParams(format!("{} encoded bits exceed codeword width {width}", enc.len())));
    }
    Ok(enc.padded(width))
}

pub fn random_word<R: RngCore + ?Sized>(rs: &RsParams, rng: &mut R) -> Vec<u16> {
    (0..rs.word_len).map(|_| rng.gen_range(0..(1u32 << rs.symbol_bits)) as u16).collect()
}

/// Picks a random password P and returns it with δ = e(E) ⊕ RS(P).
pub fn fc_commit<R: RngCore + ?Sized>(
    e: &Evidence,
    params: &FcParams,
    rng: &mut R,
) -> Result<(Vec<u16>, BitEncoding), CodecError> {
    let rs = params.code_for(e.len())?;
    let enc = padded_encoding(e, params, &rs)?;
    let password = random_word(&rs, rng);
    let lambda = codec::rs_encode(&password, &rs)?;
    let lambda_bits = BitEncoding::from_symbols(&lambda, rs.symbol_bits, enc.segment_len);
    Ok((password, enc.xor(&lambda_bits)?))
}

/// Recovers P′ from δ and local evidence, or fails when too far apart.
pub fn fc_decommit(e: &Evidence, delta: &BitEncoding, params: &FcParams) -> Result<Vec<u16>, CodecError> {
    let rs = params.code_for(e.len())?;
    let enc = padded_encoding(e, params, &rs)?;
    let lambda = enc.xor(delta)?;
    codec::rs_decode(&lambda.to_symbols(rs.symbol_bits)?, &rs)
}

/// w = h(P).
pub fn password_key(password: &[u16]) -> [u8; 32] {
    let mut bytes = b"pairlab/fc/password".to_vec();
    for s in password {
        bytes.extend_from_slice(&s.to_be_bytes());
    }
    crypto::sha256(&bytes)
}

fn confirm_key(k: &[u8]) -> [u8; 32] {
    crypto::derive_key(k, "pairlab/fc/confirm")
}

/// Where a role gets its password from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PasswordSource {
    /// Honest: commit (device) or decommit (helper) with this evidence.
    Evidence(Evidence),
    /// A guessed password; no commitment is sent or decoded.
    Fixed(Vec<u16>),
}

fn self_check_with_range(e: &Evidence, params: &FcParams) -> Vec<SelfCheckFailure> {
    let mut failures = evidence::self_check(e, &params.policy).failures;
    if let Err(CodecError::OutOfRange { index, value, max }) = codec::encode(e, &params.encoding) {
        failures.push(SelfCheckFailure::OutOfRange { index, value, max });
    }
    failures
}

pub struct FcDevice {
    params: FcParams,
    source: PasswordSource,
    op_end: i64,
    offset: i64,
    compute_ms: i64,
    timer_base: u64,
    rng: ChaCha20Rng,
    password: Option<Vec<u16>>,
    secret: Option<BigUint>,
    challenge: Option<Vec<u8>>,
    key: Option<Vec<u8>>,
    outcome: Option<PairingOutcome>,
}

impl FcDevice {
    pub fn new(source: PasswordSource, params: FcParams, timing: &TimingScript, rng: ChaCha20Rng) -> Self {
        FcDevice {
            params,
            source,
            op_end: timing.local_op_end(DEVICE),
            offset: timing.offset(DEVICE),
            compute_ms: timing.compute_ms,
            timer_base: 0,
            rng,
            password: None,
            secret: None,
            challenge: None,
            key: None,
            outcome: None,
        }
    }

    /// Shifts this role's timer ids so it can share a party with another role.
    pub fn with_timer_base(mut self, base: u64) -> Self {
        self.timer_base = base;
        self
    }

    pub fn key(&self) -> Option<&[u8]> {
        self.key.as_deref()
    }

    fn finish(&mut self, o: PairingOutcome) {
        if self.outcome.is_none() {
            self.outcome = Some(o);
        }
    }

    fn operation_ended(&mut self, ctx: &mut Ctx) {
        let group = Group::get(self.params.group);
        let password = match &self.source {
            PasswordSource::Evidence(e) => {
                let failures = self_check_with_range(e, &self.params);
                if !failures.is_empty() {
                    ctx.note(serde_json::json!({ "self_check": failures }));
                    self.finish(PairingOutcome::AbortSelfCheck { failures });
                    return;
                }
                let (password, delta) = match fc_commit(e, &self.params, &mut self.rng) {
                    Ok(v) => v,
                    Err(err) => {
                        ctx.note(serde_json::json!({ "commit_error": err.to_string() }));
                        self.finish(PairingOutcome::AbortSelfCheck { failures: vec![] });
                        return;
                    }
                };
                ctx.send_after(self.compute_ms, HELPER, LABEL_COMMIT, delta.to_bytes());
                password
            }
            PasswordSource::Fixed(p) => p.clone(),
        };
        let a = group.random_exponent(&mut self.rng);
        let w = password_key(&password);
        let body = crypto::mask(&w, LABEL_PAKE1, &group.encode(&group.public(&a)));
        ctx.send_after(self.compute_ms, HELPER, LABEL_PAKE1, body);
        self.password = Some(password);
        self.secret = Some(a);
        ctx.set_timer_at(self.op_end + self.compute_ms + self.params.timeout_ms, self.timer_base + TIMER_TIMEOUT);
    }

    fn on_pake2(&mut self, ctx: &mut Ctx, body: &[u8]) {
        let (Some(password), Some(a)) = (&self.password, &self.secret) else { return };
        if self.key.is_some() {
            return;
        }
        let group = Group::get(self.params.group);
        let el = group.element_len();
        if body.len() != el + self.params.challenge_len {
            self.finish(PairingOutcome::AbortPake { cause: PakeFailure::ChallengeMismatch });
            return;
        }
        let plain = crypto::mask(&password_key(password), LABEL_PAKE2, body);
        let mut b_pub = group.decode(&plain[..el]);
        if !group.is_valid_public(&b_pub) {
            b_pub = group.random_element(&mut self.rng);
        }
        let c1 = &plain[el..];
        let k = group.encode(&group.shared(&b_pub, a));
        let mut c2 = vec![0u8; self.params.challenge_len];
        self.rng.fill_bytes(&mut c2);
        let mut payload = c1.to_vec();
        payload.extend_from_slice(&c2);
        let sealed = crypto::seal(&confirm_key(&k), &payload, &mut self.rng);
        ctx.send_after(self.compute_ms, HELPER, LABEL_PAKE3, sealed);
        self.challenge = Some(c2);
        self.key = Some(k);
    }

    fn on_pake4(&mut self, body: &[u8]) {
        let (Some(k), Some(c2)) = (&self.key, &self.challenge) else { return };
        match crypto::open(&confirm_key(k), body) {
            Some(p) if &p == c2 => {
                let key = k.clone();
                self.finish(PairingOutcome::Paired { key });
            }
            _ => self.finish(PairingOutcome::AbortPake { cause: PakeFailure::ChallengeMismatch }),
        }
    }
}

impl Party for FcDevice {
    fn on_start(&mut self, ctx: &mut Ctx) {
        ctx.set_timer_at(self.op_end, self.timer_base + TIMER_OP_END);
    }

    fn on_message(&mut self, ctx: &mut Ctx, _from: PartyId, msg: Message) {
        if self.outcome.is_some() {
            return;
        }
        match msg.label.as_str() {
            LABEL_PAKE2 => self.on_pake2(ctx, &msg.body),
            LABEL_PAKE4 => self.on_pake4(&msg.body),
            _ => {}
        }
    }

    fn on_timer(&mut self, ctx: &mut Ctx, id: u64) {
        if self.outcome.is_some() {
            return;
        }
        match id.wrapping_sub(self.timer_base) {
            TIMER_OP_END => self.operation_ended(ctx),
            TIMER_TIMEOUT => self.finish(PairingOutcome::AbortPake { cause: PakeFailure::Timeout }),
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

pub struct FcHelper {
    params: FcParams,
    source: PasswordSource,
    op_end: i64,
    offset: i64,
    compute_ms: i64,
    timer_base: u64,
    rng: ChaCha20Rng,
    ready: bool,
    delta: Option<Vec<u8>>,
    password: Option<Vec<u16>>,
    pending: Vec<Message>,
    challenge: Option<Vec<u8>>,
    key: Option<Vec<u8>>,
    outcome: Option<PairingOutcome>,
}

impl FcHelper {
    pub fn new(source: PasswordSource, params: FcParams, timing: &TimingScript, rng: ChaCha20Rng) -> Self {
        FcHelper {
            params,
            source,
            op_end: timing.local_op_end(HELPER),
            offset: timing.offset(HELPER),
            compute_ms: timing.compute_ms,
            timer_base: 0,
            rng,
            ready: false,
            delta: None,
            password: None,
            pending: Vec::new(),
            challenge: None,
            key: None,
            outcome: None,
        }
    }

    pub fn with_timer_base(mut self, base: u64) -> Self {
        self.timer_base = base;
        self
    }

    /// Overrides the local operation end (for roles played on another party's timeline).
    pub fn with_op_end(mut self, local: i64) -> Self {
        self.op_end = local;
        self
    }

    pub fn key(&self) -> Option<&[u8]> {
        self.key.as_deref()
    }

    fn finish(&mut self, o: PairingOutcome) {
        if self.outcome.is_none() {
            self.outcome = Some(o);
        }
    }

    fn try_password(&mut self, ctx: &mut Ctx) {
        if self.password.is_some() || !self.ready {
            return;
        }
        match &self.source {
            PasswordSource::Fixed(p) => self.password = Some(p.clone()),
            PasswordSource::Evidence(e) => {
                let Some(delta) = &self.delta else { return };
                let Ok(rs) = self.params.code_for(e.len()) else { return };
                let width = rs.code_len * rs.symbol_bits as usize;
                let recovered = BitEncoding::from_bytes(delta, width, self.params.encoding.segment_len())
                    .and_then(|d| fc_decommit(e, &d, &self.params));
                let decoded = recovered.is_ok();
                ctx.note(serde_json::json!({ "decommit": if decoded { "decoded" } else { "failed" } }));
                // A decode failure continues with a random password so the
                // exchange looks the same as a wrong decode.
                self.password = Some(recovered.unwrap_or_else(|_| random_word(&rs, &mut self.rng)));
            }
        }
        for msg in std::mem::take(&mut self.pending) {
            self.handle(ctx, msg);
        }
    }

    fn handle(&mut self, ctx: &mut Ctx, msg: Message) {
        if self.outcome.is_some() {
            return;
        }
        match msg.label.as_str() {
            LABEL_COMMIT if self.delta.is_none() => {
                self.delta = Some(msg.body);
                self.try_password(ctx);
            }
            LABEL_PAKE1 | LABEL_PAKE3 if self.password.is_none() => self.pending.push(msg),
            LABEL_PAKE1 => self.on_pake1(ctx, &msg.body),
            LABEL_PAKE3 => self.on_pake3(ctx, &msg.body),
            _ => {}
        }
    }

    fn on_pake1(&mut self, ctx: &mut Ctx, body: &[u8]) {
        if self.key.is_some() {
            return;
        }
        let password = self.password.as_ref().expect("checked by caller");
        let group = Group::get(self.params.group);
        let w = password_key(password);
        let mut a_pub = if body.len() == group.element_len() {
            group.decode(&crypto::mask(&w, LABEL_PAKE1, body))
        } else {
            BigUint::default()
        };
        if !group.is_valid_public(&a_pub) {
            a_pub = group.random_element(&mut self.rng);
        }
        let b = group.random_exponent(&mut self.rng);
        let mut c1 = vec![0u8; self.params.challenge_len];
        self.rng.fill_bytes(&mut c1);
        let mut payload = group.encode(&group.public(&b));
        payload.extend_from_slice(&c1);
        ctx.send_after(self.compute_ms, DEVICE, LABEL_PAKE2, crypto::mask(&w, LABEL_PAKE2, &payload));
        self.key = Some(group.encode(&group.shared(&a_pub, &b)));
        self.challenge = Some(c1);
    }

    fn on_pake3(&mut self, ctx: &mut Ctx, body: &[u8]) {
        let (Some(k), Some(c1)) = (&self.key, &self.challenge) else { return };
        let kc = confirm_key(k);
        let n = self.params.challenge_len;
        match crypto::open(&kc, body) {
            Some(p) if p.len() == 2 * n && p[..n] == c1[..] => {
                let sealed = crypto::seal(&kc, &p[n..], &mut self.rng);
                ctx.send_after(self.compute_ms, DEVICE, LABEL_PAKE4, sealed);
                let key = k.clone();
                self.finish(PairingOutcome::Paired { key });
            }
            _ => self.finish(PairingOutcome::AbortPake { cause: PakeFailure::ChallengeMismatch }),
        }
    }
}

impl Party for FcHelper {
    fn on_start(&mut self, ctx: &mut Ctx) {
        ctx.set_timer_at(self.op_end, self.timer_base + TIMER_OP_END);
        ctx.set_timer_at(self.op_end + self.params.timeout_ms, self.timer_base + TIMER_TIMEOUT);
    }

    fn on_message(&mut self, ctx: &mut Ctx, _from: PartyId, msg: Message) {
        self.handle(ctx, msg);
    }

    fn on_timer(&mut self, ctx: &mut Ctx, id: u64) {
        if self.outcome.is_some() {
            return;
        }
        match id.wrapping_sub(self.timer_base) {
            TIMER_OP_END => {
                if let PasswordSource::Evidence(e) = &self.source {
                    let failures = self_check_with_range(e, &self.params);
                    if !failures.is_empty() {
                        ctx.note(serde_json::json!({ "self_check": failures }));
                        self.finish(PairingOutcome::AbortSelfCheck { failures });
                        return;
                    }
                }
                self.ready = true;
                self.try_password(ctx);
            }
            TIMER_TIMEOUT => {
                if self.delta.is_none() && matches!(self.source, PasswordSource::Evidence(_)) {
                    self.finish(PairingOutcome::AbortTimeout);
                } else {
                    self.finish(PairingOutcome::AbortPake { cause: PakeFailure::Timeout });
                }
            }
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

/// Runs one fuzzy-commitment session over the simulator. An attacker party,
/// when given, occupies the third slot.
pub fn run_t2pair(
    device: &Evidence,
    helper: &Evidence,
    params: &FcParams,
    timing: &TimingScript,
    sim: &SimConfig,
    script: &AdversaryScript,
    attacker: Option<Box<dyn Party>>,
) -> Result<SessionReport, SimError> {
    let mut parties: Vec<Box<dyn Party>> = vec![
        Box::new(FcDevice::new(
            PasswordSource::Evidence(device.clone()),
            params.clone(),
            timing,
            party_rng(sim.seed, DEVICE),
        )),
        Box::new(FcHelper::new(
            PasswordSource::Evidence(helper.clone()),
            params.clone(),
            timing,
            party_rng(sim.seed, HELPER),
        )),
    ];
    parties.extend(attacker);
    simnet::run_session(parties, script, sim).map(SessionReport::from_run)
}
