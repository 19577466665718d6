//! Deterministic discrete-event network with a logical millisecond clock and
//! a scriptable Dolev–Yao adversary.

pub mod attacks;

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::PairingOutcome;

pub type PartyId = usize;
pub const DEVICE: PartyId = 0;
pub const HELPER: PartyId = 1;
pub const ATTACKER: PartyId = 2;

pub fn party_name(id: PartyId) -> &'static str {
    match id {
        DEVICE => "device",
        HELPER => "helper",
        ATTACKER => "attacker",
        _ => "unknown",
    }
}

/// The honest counterpart of `id`.
pub fn peer_of(id: PartyId) -> PartyId {
    if id == DEVICE {
        HELPER
    } else {
        DEVICE
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("deadlock at t={time}: no pending events and unfinished parties {unfinished:?}")]
    Deadlock { time: i64, unfinished: Vec<PartyId> },
    #[error("event limit {0} exceeded")]
    EventLimit(usize),
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub label: String,
    #[serde(with = "crate::hexbytes")]
    pub body: Vec<u8>,
}

/// A protocol role driven by the simulator. Callbacks run to completion and
/// communicate only through the context.
pub trait Party {
    fn on_start(&mut self, ctx: &mut Ctx);
    fn on_message(&mut self, ctx: &mut Ctx, from: PartyId, msg: Message);
    fn on_timer(&mut self, _ctx: &mut Ctx, _id: u64) {}
    fn outcome(&self) -> Option<PairingOutcome>;
    /// Offset of this party's local clock from simulator time.
    fn clock_offset(&self) -> i64 {
        0
    }
}

struct Outgoing {
    delay: i64,
    to: PartyId,
    msg: Message,
}

/// Per-callback handle: local clock, outbox, timers and notes.
pub struct Ctx {
    me: PartyId,
    now: i64,
    offset: i64,
    sends: Vec<Outgoing>,
    timers: Vec<(i64, u64)>,
    notes: Vec<serde_json::Value>,
}

impl Ctx {
    fn new(me: PartyId, now: i64, offset: i64) -> Self {
        Ctx { me, now, offset, sends: Vec::new(), timers: Vec::new(), notes: Vec::new() }
    }

    pub fn me(&self) -> PartyId {
        self.me
    }

    /// Local clock reading.
    pub fn now(&self) -> i64 {
        self.now + self.offset
    }

    pub fn send(&mut self, to: PartyId, label: &str, body: Vec<u8>) {
        self.send_after(0, to, label, body);
    }

    /// Sends once `delay` ms of local work have elapsed.
    pub fn send_after(&mut self, delay: i64, to: PartyId, label: &str, body: Vec<u8>) {
        self.sends.push(Outgoing { delay: delay.max(0), to, msg: Message { label: label.into(), body } });
    }

    /// Sends at local time `t`, or immediately if `t` has passed.
    pub fn send_at(&mut self, t: i64, to: PartyId, label: &str, body: Vec<u8>) {
        let delay = t - self.now();
        self.send_after(delay, to, label, body);
    }

    /// Fires `on_timer(id)` at local time `t` (immediately if past).
    pub fn set_timer_at(&mut self, t: i64, id: u64) {
        self.timers.push((t - self.offset, id));
    }

    pub fn note(&mut self, detail: serde_json::Value) {
        self.notes.push(detail);
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Action {
    None,
    Drop,
    Delay {
        ms: i64,
    },
    Modify {
        #[serde(with = "crate::hexbytes")]
        body: Vec<u8>,
    },
    Corrupt {
        index: usize,
    },
    /// Delivers the message back to its sender as if from the intended recipient.
    Reflect,
}

impl Action {
    pub fn name(&self) -> String {
        match self {
            Action::None => "none".into(),
            Action::Drop => "drop".into(),
            Action::Delay { ms } => format!("delay({ms})"),
            Action::Modify { .. } => "modify".into(),
            Action::Corrupt { index } => format!("corrupt({index})"),
            Action::Reflect => "reflect".into(),
        }
    }
}

/// Matches honest traffic by label, sender and occurrence index.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rule {
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub from: Option<PartyId>,
    #[serde(default)]
    pub nth: Option<usize>,
    pub action: Action,
    #[serde(default)]
    pub max_hits: Option<usize>,
}

impl Rule {
    pub fn on(label: &str, from: PartyId, action: Action) -> Self {
        Rule { label: Some(label.into()), from: Some(from), nth: None, action, max_hits: None }
    }

    fn matches_fields(&self, from: PartyId, msg: &Message) -> bool {
        self.label.as_deref().is_none_or(|l| l == msg.label) && self.from.is_none_or(|f| f == from)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Injection {
    pub at_ms: i64,
    pub from: PartyId,
    pub to: PartyId,
    pub label: String,
    #[serde(with = "crate::hexbytes")]
    pub body: Vec<u8>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdversaryScript {
    pub name: String,
    #[serde(default)]
    pub rules: Vec<Rule>,
    #[serde(default)]
    pub injections: Vec<Injection>,
    /// Route all honest traffic to the attacker party instead of the peer.
    #[serde(default)]
    pub intercept: bool,
}

impl AdversaryScript {
    pub fn honest() -> Self {
        AdversaryScript { name: "honest".into(), ..Default::default() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Latency {
    pub min_ms: i64,
    pub max_ms: i64,
}

impl Latency {
    pub fn fixed(ms: i64) -> Self {
        Latency { min_ms: ms, max_ms: ms }
    }
}

impl Default for Latency {
    fn default() -> Self {
        Latency { min_ms: 20, max_ms: 80 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    pub latency: Latency,
    pub seed: u64,
    pub max_events: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig { latency: Latency::default(), seed: 0, max_events: 100_000 }
    }
}

impl SimConfig {
    pub fn with_seed(seed: u64) -> Self {
        SimConfig { seed, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.latency.min_ms < 0 || self.latency.max_ms < self.latency.min_ms {
            return Err(SimError::Config(format!(
                "latency range [{}, {}] invalid",
                self.latency.min_ms, self.latency.max_ms
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventType {
    Send,
    Deliver,
    Timer,
    Note,
    Outcome,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub seq: u64,
    pub time: i64,
    pub event: EventType,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub from: Option<PartyId>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub to: Option<PartyId>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub label: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub payload_hex: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub action: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sent_at: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub detail: Option<serde_json::Value>,
}

impl TranscriptRecord {
    fn new(seq: u64, time: i64, event: EventType) -> Self {
        TranscriptRecord {
            seq,
            time,
            event,
            from: None,
            to: None,
            label: None,
            payload_hex: None,
            action: None,
            sent_at: None,
            detail: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionRun {
    pub outcomes: Vec<Option<PairingOutcome>>,
    pub transcript: Vec<TranscriptRecord>,
    pub end_time: i64,
}

impl SessionRun {
    pub fn outcome(&self, id: PartyId) -> Option<&PairingOutcome> {
        self.outcomes.get(id).and_then(|o| o.as_ref())
    }

    pub fn transcript_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.transcript {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    /// Records of messages as they left their sender.
    pub fn sends(&self) -> impl Iterator<Item = &TranscriptRecord> {
        self.transcript.iter().filter(|r| r.event == EventType::Send)
    }
}

/// Outcome as logged: the name and, for a pairing, a short key fingerprint
/// rather than the key itself.
pub fn outcome_summary(o: &PairingOutcome) -> serde_json::Value {
    match o.key() {
        Some(k) => serde_json::json!({
            "outcome": o.name(),
            "key_fingerprint": hex::encode(&crate::crypto::sha256(k)[..8]),
        }),
        None => serde_json::json!({ "outcome": o.name() }),
    }
}

enum Event {
    Start(PartyId),
    Transmit { from: PartyId, to: PartyId, msg: Message },
    Deliver { from: PartyId, to: PartyId, msg: Message, sent_at: i64, action: String },
    Timer { party: PartyId, id: u64 },
}

struct Scheduled {
    time: i64,
    seq: u64,
    event: Event,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.seq) == (other.time, other.seq)
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> Ordering {
        (other.time, other.seq).cmp(&(self.time, self.seq))
    }
}

struct Sim<'a> {
    parties: Vec<Box<dyn Party>>,
    script: &'a AdversaryScript,
    cfg: &'a SimConfig,
    rng: ChaCha8Rng,
    queue: BinaryHeap<Scheduled>,
    next_seq: u64,
    log: Vec<TranscriptRecord>,
    log_seq: u64,
    rule_seen: Vec<usize>,
    rule_hits: Vec<usize>,
    now: i64,
}

impl Sim<'_> {
    fn schedule(&mut self, time: i64, event: Event) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Scheduled { time, seq, event });
    }

    fn record(&mut self, event: EventType) -> &mut TranscriptRecord {
        let seq = self.log_seq;
        self.log_seq += 1;
        self.log.push(TranscriptRecord::new(seq, self.now, event));
        self.log.last_mut().expect("just pushed")
    }

    fn latency(&mut self) -> i64 {
        let l = self.cfg.latency;
        self.rng.gen_range(l.min_ms..=l.max_ms)
    }

    fn has_attacker(&self) -> bool {
        self.parties.len() > ATTACKER
    }

    fn honest_done(&self) -> bool {
        self.parties.iter().take(2).all(|p| p.outcome().is_some())
    }

    fn dispatch(&mut self, id: PartyId, f: impl FnOnce(&mut dyn Party, &mut Ctx)) {
        let offset = self.parties[id].clock_offset();
        let before = self.parties[id].outcome().is_some();
        let mut ctx = Ctx::new(id, self.now, offset);
        f(self.parties[id].as_mut(), &mut ctx);
        for detail in ctx.notes {
            let r = self.record(EventType::Note);
            r.from = Some(id);
            r.detail = Some(detail);
        }
        for s in ctx.sends {
            let at = self.now + s.delay;
            self.schedule(at, Event::Transmit { from: id, to: s.to, msg: s.msg });
        }
        for (at, tid) in ctx.timers {
            let at = at.max(self.now);
            self.schedule(at, Event::Timer { party: id, id: tid });
        }
        if !before {
            if let Some(o) = self.parties[id].outcome() {
                let r = self.record(EventType::Outcome);
                r.from = Some(id);
                r.detail = Some(outcome_summary(&o));
            }
        }
    }

    fn pick_action(&mut self, from: PartyId, msg: &Message) -> Action {
        let mut chosen = None;
        for (i, rule) in self.script.rules.iter().enumerate() {
            if !rule.matches_fields(from, msg) {
                continue;
            }
            let occurrence = self.rule_seen[i];
            self.rule_seen[i] += 1;
            if chosen.is_some() {
                continue;
            }
            if rule.nth.is_some_and(|n| n != occurrence) {
                continue;
            }
            if rule.max_hits.is_some_and(|m| self.rule_hits[i] >= m) {
                continue;
            }
            self.rule_hits[i] += 1;
            chosen = Some(rule.action.clone());
        }
        chosen.unwrap_or(Action::None)
    }

    fn transmit(&mut self, from: PartyId, to: PartyId, mut msg: Message) {
        let honest = from < 2;
        let action = if honest { self.pick_action(from, &msg) } else { Action::None };
        {
            let now = self.now;
            let r = self.record(EventType::Send);
            r.from = Some(from);
            r.to = Some(to);
            r.label = Some(msg.label.clone());
            r.payload_hex = Some(hex::encode(&msg.body));
            r.action = Some(action.name());
            r.sent_at = Some(now);
        }
        let lat = self.latency();
        let mut arrive = self.now + lat;
        let (mut src, mut dst) = (from, to);
        match &action {
            Action::None => {}
            Action::Drop => return,
            Action::Delay { ms } => arrive += ms.max(&0),
            Action::Modify { body } => msg.body = body.clone(),
            Action::Corrupt { index } => {
                if let Some(b) = msg.body.get_mut(*index) {
                    *b ^= 0x01;
                }
            }
            Action::Reflect => {
                src = to;
                dst = from;
            }
        }
        if honest && self.script.intercept && self.has_attacker() && action != Action::Reflect {
            dst = ATTACKER;
        } else if !honest {
            src = peer_of(to);
        }
        let sent_at = self.now;
        self.schedule(arrive, Event::Deliver { from: src, to: dst, msg, sent_at, action: action.name() });
    }

    fn run(mut self) -> Result<SessionRun, SimError> {
        for id in 0..self.parties.len() {
            self.schedule(0, Event::Start(id));
        }
        for inj in &self.script.injections {
            let msg = Message { label: inj.label.clone(), body: inj.body.clone() };
            let seq = self.next_seq;
            self.next_seq += 1;
            self.queue.push(Scheduled {
                time: inj.at_ms,
                seq,
                event: Event::Deliver { from: inj.from, to: inj.to, msg, sent_at: inj.at_ms, action: "inject".into() },
            });
        }
        let mut processed = 0usize;
        while !self.honest_done() {
            let Some(next) = self.queue.pop() else {
                let unfinished = (0..2).filter(|&i| self.parties[i].outcome().is_none()).collect();
                return Err(SimError::Deadlock { time: self.now, unfinished });
            };
            processed += 1;
            if processed > self.cfg.max_events {
                return Err(SimError::EventLimit(self.cfg.max_events));
            }
            self.now = next.time;
            match next.event {
                Event::Start(id) => self.dispatch(id, |p, ctx| p.on_start(ctx)),
                Event::Transmit { from, to, msg } => self.transmit(from, to, msg),
                Event::Deliver { from, to, msg, sent_at, action } => {
                    if to >= self.parties.len() {
                        continue;
                    }
                    let r = self.record(EventType::Deliver);
                    r.from = Some(from);
                    r.to = Some(to);
                    r.label = Some(msg.label.clone());
                    r.payload_hex = Some(hex::encode(&msg.body));
                    r.action = Some(action);
                    r.sent_at = Some(sent_at);
                    self.dispatch(to, |p, ctx| p.on_message(ctx, from, msg));
                }
                Event::Timer { party, id } => {
                    let r = self.record(EventType::Timer);
                    r.from = Some(party);
                    r.detail = Some(serde_json::json!({ "timer": id }));
                    self.dispatch(party, |p, ctx| p.on_timer(ctx, id));
                }
            }
        }
        Ok(SessionRun {
            outcomes: self.parties.iter().map(|p| p.outcome()).collect(),
            transcript: self.log,
            end_time: self.now,
        })
    }
}

/// Runs `parties` (device, helper, optional attacker) until both honest
/// parties reach an outcome.
pub fn run_session(
    parties: Vec<Box<dyn Party>>,
    script: &AdversaryScript,
    cfg: &SimConfig,
) -> Result<SessionRun, SimError> {
    cfg.validate()?;
    if parties.len() < 2 || parties.len() > 3 {
        return Err(SimError::Config(format!("expected 2 or 3 parties, got {}", parties.len())));
    }
    if script.intercept && parties.len() < 3 {
        return Err(SimError::Config("interception requires an attacker party".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(0);
    let n = script.rules.len();
    Sim {
        parties,
        script,
        cfg,
        rng,
        queue: BinaryHeap::new(),
        next_seq: 0,
        log: Vec::new(),
        log_seq: 0,
        rule_seen: vec![0; n],
        rule_hits: vec![0; n],
        now: 0,
    }
    .run()
}
