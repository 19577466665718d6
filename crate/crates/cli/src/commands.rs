//! Subcommand implementations. Every artifact carries the config hash.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use pairlab::codec::{EncodingParams, Scheme};
use pairlab::correlation::{self, Classifier};
use pairlab::metrics::{self, Polarity, Roc, RocPoint};
use pairlab::protocol::{fc, zl, ProtocolKind, SessionReport};
use pairlab::sensing;
use pairlab::simnet::attacks::{self, AttackEnv, AttackKind};
use pairlab::simnet::{outcome_summary, AdversaryScript};
use pairlab::synthgen::{self, PairLabel, PairRecord};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;

/// Keeps mimicry draws independent of the session they imitate.
const MIMIC_STREAM: u64 = 1 << 40;

#[derive(Serialize)]
struct Tagged<'a, T: Serialize> {
    config_hash: &'a str,
    #[serde(flatten)]
    item: T,
}

/// Where artifacts go: files in `dir`, or stdout when no directory is set.
pub struct Sink {
    dir: Option<PathBuf>,
}

impl Sink {
    pub fn new(dir: Option<PathBuf>) -> Result<Self> {
        if let Some(d) = &dir {
            fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
        }
        Ok(Sink { dir })
    }

    fn path(&self, name: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(name))
    }

    /// Writes a named artifact; without an output directory it goes to stdout.
    fn artifact(&self, name: &str, contents: &str) -> Result<()> {
        match self.path(name) {
            Some(p) => {
                if let Some(parent) = p.parent() {
                    fs::create_dir_all(parent)?;
                }
                fs::write(&p, contents).with_context(|| format!("writing {}", p.display()))
            }
            None => {
                let mut out = std::io::stdout().lock();
                out.write_all(contents.as_bytes())?;
                Ok(())
            }
        }
    }

    /// Writes a named artifact when an output directory is set; skipped otherwise.
    fn file_only(&self, name: &str, contents: &str) -> Result<()> {
        if self.dir.is_some() {
            self.artifact(name, contents)?;
        }
        Ok(())
    }
}

fn print_json(v: &serde_json::Value) -> Result<()> {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{}", serde_json::to_string(v)?)?;
    Ok(())
}

fn jsonl<T: Serialize>(hash: &str, items: impl IntoIterator<Item = T>) -> Result<String> {
    let mut s = String::new();
    for item in items {
        s.push_str(&serde_json::to_string(&Tagged { config_hash: hash, item })?);
        s.push('\n');
    }
    Ok(s)
}

fn csv_text<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

pub fn generate(cfg: &RunConfig, sink: &Sink) -> Result<()> {
    let hash = cfg.hash();
    let spec = cfg.dataset_spec();
    let records: Vec<PairRecord> =
        (0..spec.len() as u64).into_par_iter().map(|i| synthgen::gen_record(&spec, i)).collect::<Result<_, _>>()?;
    sink.artifact("dataset.jsonl", &jsonl(&hash, &records)?)?;
    sink.file_only(
        "manifest.json",
        &serde_json::to_string_pretty(&json!({
            "config_hash": hash,
            "config": cfg,
            "records": records.len(),
            "positives": spec.positives,
            "negatives": spec.negatives,
            "mimicry_per_skill": spec.mimicry,
        }))?,
    )?;
    if cfg.traces > 0 {
        let Some(dir) = &sink.dir else { bail!("--traces needs --out") };
        write_traces(cfg, &dir.join("traces"), &hash)?;
    }
    Ok(())
}

/// Raw device logs and helper IMU traces for the first `cfg.traces` sessions.
fn write_traces(cfg: &RunConfig, dir: &Path, hash: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    let policy = cfg.policy();
    (0..cfg.traces as u64).into_par_iter().try_for_each(|i| -> Result<()> {
        let mut rng = synthgen::pair_rng(cfg.seed, i);
        let mut user = synthgen::UserModel::random_user(cfg.ui_type, &mut rng);
        user.sigma_j = cfg.user_model().sigma_j;
        let session = synthgen::gen_session_rng(&user, cfg.ui_type, &policy, &mut rng)?;
        let tr = synthgen::gen_traces(&session, &mut rng);
        let imu = BufWriter::new(File::create(dir.join(format!("session_{i:05}.imu.jsonl")))?);
        sensing::write_samples_jsonl(&tr.helper_trace.samples, imu)?;
        let events = BufWriter::new(File::create(dir.join(format!("session_{i:05}.events.jsonl")))?);
        sensing::write_events_jsonl(&tr.device_events, events)?;
        let truth = json!({
            "config_hash": hash,
            "ui_type": cfg.ui_type,
            "rate_hz": tr.helper_trace.rate_hz,
            "device_times": session.device_times,
            "helper_times": session.helper_times,
            "device": session.device.intervals,
            "helper": session.helper.intervals,
        });
        fs::write(dir.join(format!("session_{i:05}.truth.json")), serde_json::to_string_pretty(&truth)?)?;
        Ok(())
    })
}

fn session_env(cfg: &RunConfig, seed: u64) -> Result<(synthgen::Session, AttackEnv)> {
    let model = cfg.user_model();
    let session = synthgen::gen_session(&model, cfg.ui_type, &cfg.policy(), seed)?;
    let mut env =
        AttackEnv::new(cfg.protocol, session.device.clone(), session.helper.clone(), cfg.ui_type, cfg.sim(seed));
    env.fc = cfg.fc_params();
    env.zl = cfg.zl_params();
    env.timing.compute_ms = cfg.compute_ms;
    Ok((session, env))
}

fn run_honest(cfg: &RunConfig, env: &AttackEnv) -> Result<SessionReport> {
    let script = AdversaryScript::honest();
    Ok(match cfg.protocol {
        ProtocolKind::T2pair => {
            fc::run_t2pair(&env.device, &env.helper, &env.fc, &env.timing, &env.sim, &script, None)?
        }
        ProtocolKind::T2pairpp => {
            zl::run_t2pairpp(&env.device, &env.helper, &env.zl, &env.timing, &env.sim, &script, None)?
        }
    })
}

pub fn pair(cfg: &RunConfig, sink: &Sink) -> Result<()> {
    let hash = cfg.hash();
    let (_, env) = session_env(cfg, cfg.seed)?;
    let report = run_honest(cfg, &env)?;
    let summary = json!({
        "config_hash": hash,
        "protocol": cfg.protocol,
        "seed": cfg.seed,
        "device_evidence": env.device.intervals,
        "helper_evidence": env.helper.intervals,
        "device": outcome_summary(&report.device),
        "helper": outcome_summary(&report.helper),
        "paired_same_key": report.both_paired_same_key(),
        "end_time_ms": report.run.end_time,
    });
    print_json(&summary)?;
    sink.file_only("summary.json", &serde_json::to_string_pretty(&summary)?)?;
    sink.artifact("transcript.jsonl", &report.run.transcript_jsonl())
}

#[derive(Serialize)]
struct AttackRow {
    attack: String,
    protocol: ProtocolKind,
    runs: usize,
    verdict: &'static str,
    device: BTreeMap<String, usize>,
    helper: BTreeMap<String, usize>,
    attacker_success: usize,
}

/// Rows of the outcome matrix: an honest baseline, then each applicable attack.
pub fn attack(cfg: &RunConfig, sink: &Sink) -> Result<()> {
    let hash = cfg.hash();
    let skill = cfg.skills.iter().cloned().fold(0.0, f64::max);
    let model = cfg.user_model();
    let kinds: Vec<Option<AttackKind>> = std::iter::once(None)
        .chain(AttackKind::ALL.into_iter().filter(|k| k.applies_to(cfg.protocol)).map(Some))
        .collect();
    let mut rows = Vec::new();
    for kind in kinds {
        let results: Vec<(String, String, bool, bool)> = (0..cfg.runs as u64)
            .into_par_iter()
            .map(|r| -> Result<_> {
                let seed = cfg.seed.wrapping_add(r);
                let (session, mut env) = session_env(cfg, seed)?;
                Ok(match kind {
                    None => {
                        let rep = run_honest(cfg, &env)?;
                        let both = rep.both_paired_same_key();
                        (rep.device.name().to_string(), rep.helper.name().to_string(), both, false)
                    }
                    Some(k) => {
                        if k == AttackKind::Mimicry {
                            let mut rng = synthgen::pair_rng(seed, MIMIC_STREAM);
                            env.mimic = Some(synthgen::mimic_evidence(&session, &model, skill, None, &mut rng));
                        }
                        let res = attacks::run_attack(k, &env)?;
                        let both = res.both_paired();
                        (res.device_outcome().into(), res.helper_outcome().into(), both, res.attacker_success)
                    }
                })
            })
            .collect::<Result<_>>()?;
        let mut device = BTreeMap::new();
        let mut helper = BTreeMap::new();
        for (d, h, _, _) in &results {
            *device.entry(d.clone()).or_insert(0) += 1;
            *helper.entry(h.clone()).or_insert(0) += 1;
        }
        let paired = results.iter().filter(|r| r.2).count();
        rows.push(AttackRow {
            attack: kind.map_or("honest".to_string(), |k| k.name().to_string()),
            protocol: cfg.protocol,
            runs: cfg.runs,
            verdict: if paired == cfg.runs {
                "paired"
            } else if paired == 0 {
                "abort"
            } else {
                "mixed"
            },
            device,
            helper,
            attacker_success: results.iter().filter(|r| r.3).count(),
        });
    }
    sink.artifact("attacks.jsonl", &jsonl(&hash, &rows)?)
}

#[derive(Serialize)]
struct EntropyCsvRow<'a> {
    config_hash: &'a str,
    #[serde(flatten)]
    row: metrics::EntropyRow,
}

pub fn entropy(cfg: &RunConfig, sink: &Sink) -> Result<()> {
    let hash = cfg.hash();
    let rows: Vec<EntropyCsvRow> = metrics::entropy_table(cfg.ui_type, cfg.encoding.base_ms as f64)?
        .into_iter()
        .map(|row| EntropyCsvRow { config_hash: &hash, row })
        .collect();
    // Flattened structs cannot go through the csv serializer directly.
    let flat: Vec<serde_json::Value> = rows.iter().map(serde_json::to_value).collect::<Result<_, _>>()?;
    let header = [
        "config_hash",
        "ui_type",
        "base",
        "n1",
        "n2",
        "e1",
        "e2",
        "total",
        "total_no_binomial",
        "time_ms",
        "bit_rate",
        "bit_rate_no_binomial",
    ];
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for v in &flat {
        w.write_record(header.iter().map(|k| match &v[*k] {
            serde_json::Value::String(s) => s.clone(),
            serde_json::Value::Number(n) => match n.as_f64() {
                Some(x) if n.is_f64() => format!("{x:.4}"),
                _ => n.to_string(),
            },
            other => other.to_string(),
        }))?;
    }
    sink.artifact("entropy.csv", &String::from_utf8(w.into_inner()?)?)
}

/// Scores for the configured protocol: negated encoding distance for the
/// fuzzy-commitment protocol, classifier score for the deadline protocol.
struct Scored {
    values: Vec<f64>,
    polarity: Polarity,
    operating: f64,
}

fn score_records(cfg: &RunConfig, records: &[PairRecord], encoding: &EncodingParams, protocol: ProtocolKind) -> Scored {
    match protocol {
        ProtocolKind::T2pair => Scored {
            values: records
                .par_iter()
                .map(|r| metrics::encoding_distance(&r.device_evidence(), &r.helper_evidence(), encoding))
                .collect(),
            polarity: Polarity::Distance,
            operating: cfg.thr as f64,
        },
        ProtocolKind::T2pairpp => {
            let c = Classifier::shipped();
            Scored {
                values: records
                    .par_iter()
                    .map(|r| {
                        correlation::features(&r.device_evidence(), &r.helper_evidence())
                            .map_or(f64::MIN / 2.0, |f| c.score(&f))
                    })
                    .collect(),
                polarity: Polarity::Score,
                operating: c.tau,
            }
        }
    }
}

fn accepts(polarity: Polarity, value: f64, threshold: f64) -> bool {
    match polarity {
        Polarity::Score => value >= threshold,
        Polarity::Distance => value <= threshold,
    }
}

struct Evaluation {
    roc: Roc,
    operating: RocPoint,
    mimicry: Vec<serde_json::Value>,
}

fn evaluate_records(
    cfg: &RunConfig,
    records: &[PairRecord],
    encoding: &EncodingParams,
    protocol: ProtocolKind,
) -> Result<Evaluation> {
    let scored = score_records(cfg, records, encoding, protocol);
    // ROC over legitimate pairs versus random pairs; mimicry is reported separately.
    let base: Vec<usize> =
        (0..records.len()).filter(|&i| !matches!(records[i].pair, PairLabel::Mimicry { .. })).collect();
    let values: Vec<f64> = base.iter().map(|&i| scored.values[i]).collect();
    let labels: Vec<bool> = base.iter().map(|&i| records[i].label > 0).collect();
    let roc = metrics::roc_with(&values, &labels, scored.polarity)?;
    let operating = metrics::rates_at(&values, &labels, scored.operating, scored.polarity)?;
    let mut skills: Vec<f64> = records
        .iter()
        .filter_map(|r| match r.pair {
            PairLabel::Mimicry { skill } => Some(skill),
            _ => None,
        })
        .collect();
    skills.sort_by(f64::total_cmp);
    skills.dedup();
    let mimicry = skills
        .into_iter()
        .map(|s| {
            let idx: Vec<usize> =
                (0..records.len()).filter(|&i| records[i].pair == PairLabel::Mimicry { skill: s }).collect();
            let accepted =
                idx.iter().filter(|&&i| accepts(scored.polarity, scored.values[i], scored.operating)).count();
            json!({ "skill": s, "pairs": idx.len(), "far": accepted as f64 / idx.len() as f64 })
        })
        .collect();
    Ok(Evaluation { roc, operating, mimicry })
}

fn load_records(cfg: &RunConfig) -> Result<Vec<PairRecord>> {
    match &cfg.dataset {
        Some(path) => {
            let f = File::open(path).with_context(|| format!("opening dataset {}", path.display()))?;
            let mut out = Vec::new();
            for (n, line) in BufReader::new(f).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                out.push(serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), n + 1))?);
            }
            Ok(out)
        }
        None => {
            let spec = cfg.dataset_spec();
            Ok((0..spec.len() as u64)
                .into_par_iter()
                .map(|i| synthgen::gen_record(&spec, i))
                .collect::<Result<_, _>>()?)
        }
    }
}

pub fn evaluate(cfg: &RunConfig, sink: &Sink) -> Result<()> {
    let hash = cfg.hash();
    let records = load_records(cfg)?;
    let ev = evaluate_records(cfg, &records, &cfg.encoding, cfg.protocol)?;
    let mut summary = json!({
        "config_hash": hash,
        "protocol": cfg.protocol,
        "pairs": records.len(),
        "auc": ev.roc.auc,
        "eer": ev.roc.eer,
        "operating_point": ev.operating,
        "mimicry": ev.mimicry,
    });
    if cfg.protocol == ProtocolKind::T2pair {
        let other = match cfg.encoding.scheme {
            Scheme::Faithful => EncodingParams { scheme: Scheme::Vanilla, ..cfg.encoding },
            Scheme::Vanilla => EncodingParams { scheme: Scheme::Faithful, ..cfg.encoding },
        };
        let alt = evaluate_records(cfg, &records, &other, cfg.protocol)?;
        let name = match other.scheme {
            Scheme::Faithful => "faithful_auc",
            Scheme::Vanilla => "vanilla_auc",
        };
        summary[name] = json!(alt.roc.auc);
    }
    print_json(&summary)?;
    sink.file_only("summary.json", &serde_json::to_string_pretty(&summary)?)?;
    let roc_rows: Vec<Tagged<RocPoint>> =
        ev.roc.points.iter().map(|p| Tagged { config_hash: &hash, item: *p }).collect();
    let flat: Vec<(String, f64, f64, f64)> =
        roc_rows.iter().map(|r| (r.config_hash.to_string(), r.item.threshold, r.item.far, r.item.frr)).collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["config_hash", "threshold", "far", "frr"])?;
    for row in flat {
        w.serialize(row)?;
    }
    sink.file_only("roc.csv", &String::from_utf8(w.into_inner()?)?)
}

#[derive(Serialize)]
struct SweepRow {
    config_hash: String,
    param: String,
    value: f64,
    protocol: ProtocolKind,
    far: f64,
    frr: f64,
    eer: Option<f64>,
    auc: Option<f64>,
}

pub const SWEEP_PARAMS: [&str; 5] = ["thr", "base", "length", "tthr", "sigma_j"];

pub fn sweep(cfg: &RunConfig, sink: &Sink) -> Result<()> {
    let hash = cfg.hash();
    let Some(param) = cfg.sweep_param.as_deref() else { bail!("sweep needs --param (one of {SWEEP_PARAMS:?})") };
    if !SWEEP_PARAMS.contains(&param) {
        bail!("unknown sweep parameter {param:?}; expected one of {SWEEP_PARAMS:?}");
    }
    if cfg.sweep_values.is_empty() {
        bail!("sweep needs --values");
    }
    let mut rows = Vec::new();
    for &value in &cfg.sweep_values {
        let mut c = cfg.clone();
        match param {
            "thr" => c.thr = value as usize,
            "base" => c.encoding.base_ms = value as u32,
            "length" => c.length = Some(value as usize),
            "tthr" => {
                c.t_thr_ms = value as i64;
                c.protocol = ProtocolKind::T2pairpp;
            }
            _ => c.sigma_j = Some(value),
        }
        c.validate().with_context(|| format!("{param} = {value}"))?;
        let row = if param == "tthr" {
            deadline_row(&c)?
        } else {
            let records = load_records(&c)?;
            let ev = evaluate_records(&c, &records, &c.encoding, c.protocol)?;
            (ev.operating.far, ev.operating.frr, Some(ev.roc.eer), Some(ev.roc.auc))
        };
        rows.push(SweepRow {
            config_hash: hash.clone(),
            param: param.into(),
            value,
            protocol: c.protocol,
            far: row.0,
            frr: row.1,
            eer: row.2,
            auc: row.3,
        });
    }
    sink.artifact("sweep.csv", &csv_text(&rows)?)
}

/// Deadline window: FRR is the share of honest sessions that fail; FAR is
/// the share of sessions a 700 ms commitment delay fails to break.
fn deadline_row(cfg: &RunConfig) -> Result<(f64, f64, Option<f64>, Option<f64>)> {
    let n = cfg.sweep_sessions.max(1);
    let outcomes: Vec<(bool, bool)> = (0..n as u64)
        .into_par_iter()
        .map(|i| -> Result<_> {
            let seed = cfg.seed.wrapping_add(i);
            let (_, env) = session_env(cfg, seed)?;
            let honest = run_honest(cfg, &env)?.both_paired_same_key();
            let delayed = attacks::run_attack(AttackKind::DelayReplay, &env)?.both_paired();
            Ok((honest, delayed))
        })
        .collect::<Result<_>>()?;
    let frr = outcomes.iter().filter(|o| !o.0).count() as f64 / n as f64;
    let far = outcomes.iter().filter(|o| o.1).count() as f64 / n as f64;
    Ok((far, frr, None, None))
}
