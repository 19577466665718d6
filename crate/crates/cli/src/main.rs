//! `pairlab`: generate synthetic operations, run pairing sessions and
//! attacks, and evaluate accuracy and entropy.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use pairlab::crypto::GroupId;
use pairlab::protocol::ProtocolKind;
use pairlab::sensing::UiType;

use commands::Sink;
use config::{Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "pairlab", version, about = "Pairing protocol laboratory")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// JSON run configuration.
    #[arg(long, global = true, env = "PAIRLAB_CONFIG")]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    protocol: Option<ProtocolKind>,
    /// Operation type: button, knob or screen.
    #[arg(long = "ui", visible_alias = "device", global = true)]
    ui_type: Option<UiType>,
    /// Encoding base in milliseconds.
    #[arg(long, global = true)]
    base: Option<u32>,
    /// Hamming threshold for the fuzzy-commitment protocol.
    #[arg(long, global = true)]
    thr: Option<usize>,
    /// Deadline slack in milliseconds for the deadline protocol.
    #[arg(long, global = true)]
    tthr: Option<i64>,
    /// Number of intervals per operation.
    #[arg(long, global = true)]
    length: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; all cores when omitted.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory; artifacts go to stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Pairs per class in generated datasets.
    #[arg(long, global = true)]
    pairs: Option<usize>,
    /// Sessions per attack.
    #[arg(long, global = true)]
    runs: Option<usize>,
    /// Operations without pauses.
    #[arg(long, global = true)]
    no_pauses: bool,
    /// Use the fixed-width binary encoding.
    #[arg(long, global = true)]
    vanilla: bool,
    /// Diffie-Hellman group: modp2048 or test512.
    #[arg(long, global = true)]
    group: Option<GroupId>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled dataset of evidence pairs.
    Generate {
        /// Also write raw traces for this many sessions.
        #[arg(long)]
        traces: Option<usize>,
    },
    /// Run one honest pairing session.
    Pair,
    /// Run every applicable attack against the configured protocol.
    Attack,
    /// Accuracy across values of one parameter.
    Sweep {
        /// thr, base, length, tthr or sigma_j.
        #[arg(long)]
        param: Option<String>,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Entropy and bit rate of operation evidence.
    Entropy,
    /// ROC, EER and AUC over a dataset.
    Evaluate {
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<()> {
    let g = cli.global;
    let mut o = Overrides {
        protocol: g.protocol,
        ui_type: g.ui_type,
        base: g.base,
        thr: g.thr,
        t_thr_ms: g.tthr,
        length: g.length,
        seed: g.seed,
        pairs: g.pairs,
        runs: g.runs,
        no_pauses: g.no_pauses,
        vanilla: g.vanilla,
        group: g.group,
        ..Default::default()
    };
    match &cli.command {
        Command::Generate { traces } => o.traces = *traces,
        Command::Sweep { param, values, dataset } => {
            o.sweep_param = param.clone();
            o.sweep_values = values.clone();
            o.dataset = dataset.clone();
        }
        Command::Evaluate { dataset } => o.dataset = dataset.clone(),
        _ => {}
    }
    let mut cfg = RunConfig::load(g.config.as_deref())?;
    cfg.apply(&o);
    cfg.validate()?;
    if let Some(j) = g.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(j).build_global()?;
    }
    let sink = Sink::new(g.out)?;
    match cli.command {
        Command::Generate { .. } => commands::generate(&cfg, &sink),
        Command::Pair => commands::pair(&cfg, &sink),
        Command::Attack => commands::attack(&cfg, &sink),
        Command::Sweep { .. } => commands::sweep(&cfg, &sink),
        Command::Entropy => commands::entropy(&cfg, &sink),
        Command::Evaluate { .. } => commands::evaluate(&cfg, &sink),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<std::io::Error>().is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe) => {
            ExitCode::SUCCESS
        }
        Err(e) => {
            let msg = format!("{e:#}");
            eprintln!("{}", serde_json::json!({ "error": msg }));
            ExitCode::FAILURE
        }
    }
}
