//! Run configuration: JSON file (from `--config` or `PAIRLAB_CONFIG`) with
//! command-line overrides applied on top.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use pairlab::codec::{EncodingParams, RsParams, Scheme};
use pairlab::crypto::GroupId;
use pairlab::evidence::EvidencePolicy;
use pairlab::protocol::fc::FcParams;
use pairlab::protocol::zl::{ZlParams, DEFAULT_T_THR_MS};
use pairlab::protocol::{ProtocolKind, DEFAULT_TIMEOUT_MS};
use pairlab::sensing::UiType;
use pairlab::simnet::{Latency, SimConfig};
use pairlab::synthgen::{DatasetSpec, UserModel};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub protocol: ProtocolKind,
    pub ui_type: UiType,
    /// Require pauses in the operation.
    pub pauses: bool,
    /// Overrides the policy's interval count.
    pub length: Option<usize>,
    pub encoding: EncodingParams,
    pub thr: usize,
    pub rs: Option<RsParams>,
    pub group: GroupId,
    pub t_thr_ms: i64,
    pub timeout_ms: i64,
    pub compute_ms: i64,
    pub latency: Latency,
    pub seed: u64,
    /// Sensing jitter; the UI default when absent.
    pub sigma_j: Option<f64>,
    /// Pairs per class for generated datasets.
    pub pairs: usize,
    /// Mimicry pairs per skill level.
    pub mimicry_pairs: usize,
    pub skills: Vec<f64>,
    /// Sessions per attack in `attack`.
    pub runs: usize,
    /// Dataset read by `evaluate`; generated from this config when absent.
    pub dataset: Option<PathBuf>,
    /// Parameter varied by `sweep` and its values.
    pub sweep_param: Option<String>,
    pub sweep_values: Vec<f64>,
    /// Sessions per value in deadline sweeps.
    pub sweep_sessions: usize,
    /// Number of trace files `generate` writes alongside the dataset.
    pub traces: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            protocol: ProtocolKind::T2pair,
            ui_type: UiType::Button,
            pauses: true,
            length: None,
            encoding: EncodingParams::default(),
            thr: 16,
            rs: None,
            group: GroupId::Modp2048,
            t_thr_ms: DEFAULT_T_THR_MS,
            timeout_ms: DEFAULT_TIMEOUT_MS,
            compute_ms: 1,
            latency: Latency::default(),
            seed: 0,
            sigma_j: None,
            pairs: 1000,
            mimicry_pairs: 0,
            skills: vec![0.0, 1.0],
            runs: 1,
            dataset: None,
            sweep_param: None,
            sweep_values: Vec::new(),
            sweep_sessions: 50,
            traces: 0,
        }
    }
}

/// Values given on the command line; `None` leaves the config untouched.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub protocol: Option<ProtocolKind>,
    pub ui_type: Option<UiType>,
    pub base: Option<u32>,
    pub thr: Option<usize>,
    pub t_thr_ms: Option<i64>,
    pub length: Option<usize>,
    pub seed: Option<u64>,
    pub pairs: Option<usize>,
    pub runs: Option<usize>,
    pub no_pauses: bool,
    pub vanilla: bool,
    pub group: Option<GroupId>,
    pub dataset: Option<PathBuf>,
    pub sweep_param: Option<String>,
    pub sweep_values: Option<Vec<f64>>,
    pub traces: Option<usize>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(RunConfig::default()) };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn apply(&mut self, o: &Overrides) {
        macro_rules! set {
            ($field:ident, $value:expr) => {
                if let Some(v) = $value.clone() {
                    self.$field = v;
                }
            };
        }
        set!(protocol, o.protocol);
        set!(ui_type, o.ui_type);
        set!(thr, o.thr);
        set!(t_thr_ms, o.t_thr_ms);
        set!(seed, o.seed);
        set!(pairs, o.pairs);
        set!(runs, o.runs);
        set!(group, o.group);
        set!(sweep_values, o.sweep_values);
        set!(traces, o.traces);
        if let Some(b) = o.base {
            self.encoding.base_ms = b;
        }
        if o.length.is_some() {
            self.length = o.length;
        }
        if o.dataset.is_some() {
            self.dataset = o.dataset.clone();
        }
        if o.sweep_param.is_some() {
            self.sweep_param = o.sweep_param.clone();
        }
        if o.no_pauses {
            self.pauses = false;
        }
        if o.vanilla {
            self.encoding.scheme = Scheme::Vanilla;
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.encoding.validate()?;
        self.policy().validate().map_err(anyhow::Error::msg)?;
        self.fc_params().validate().map_err(anyhow::Error::msg)?;
        self.zl_params().validate().map_err(anyhow::Error::msg)?;
        self.sim(0).validate()?;
        self.user_model().validate()?;
        if self.compute_ms < 0 {
            bail!("compute_ms must be non-negative");
        }
        if self.skills.iter().any(|s| !(0.0..=1.0).contains(s)) {
            bail!("skills must lie in [0, 1]");
        }
        if self.runs == 0 {
            bail!("runs must be positive");
        }
        Ok(())
    }

    pub fn policy(&self) -> EvidencePolicy {
        let mut p =
            if self.pauses { EvidencePolicy::with_pauses(self.ui_type) } else { EvidencePolicy::without_pauses() };
        if let Some(n) = self.length {
            p.required_length = n;
        }
        p
    }

    pub fn fc_params(&self) -> FcParams {
        FcParams {
            encoding: self.encoding,
            thr: self.thr,
            rs: self.rs,
            group: self.group,
            policy: self.policy(),
            timeout_ms: self.timeout_ms,
            ..FcParams::new(self.ui_type)
        }
    }

    pub fn zl_params(&self) -> ZlParams {
        ZlParams {
            t_thr_ms: self.t_thr_ms,
            group: self.group,
            policy: self.policy(),
            timeout_ms: self.timeout_ms,
            ..ZlParams::new(self.ui_type)
        }
    }

    pub fn sim(&self, seed: u64) -> SimConfig {
        SimConfig { latency: self.latency, ..SimConfig::with_seed(seed) }
    }

    pub fn user_model(&self) -> UserModel {
        let m = UserModel::for_ui(self.ui_type);
        UserModel { sigma_j: self.sigma_j.unwrap_or(m.sigma_j), ..m }
    }

    pub fn dataset_spec(&self) -> DatasetSpec {
        let mut spec = DatasetSpec::new(self.ui_type, self.policy(), self.pairs, self.pairs, self.seed);
        spec.sigma_j = self.user_model().sigma_j;
        spec.mimicry = self.mimicry_pairs;
        spec.skills = if self.mimicry_pairs > 0 { self.skills.clone() } else { Vec::new() };
        spec
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }
}
