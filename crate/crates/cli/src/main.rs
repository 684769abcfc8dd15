use std::path::PathBuf;
use std::process::ExitCode;

use aca_core::experiments::{self, ExperimentConfig, ExperimentKind};
use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use log::info;

#[derive(Parser, Debug)]
#[command(name = "aca", version, about = "Seeded coverage/density experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

/// Flags shared by every runner. Anything given here overrides the config file.
#[derive(Args, Debug)]
struct Common {
    /// TOML config; missing keys keep their defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for the CSV and summary.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Override the runner's trial / world count.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Worker threads, 0 for all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Sup error against anchor count at a fixed budget.
    SweepK,
    /// Fitted optimal-K exponent across budgets.
    ScalingLaw,
    /// Coverage of the all-anchor concentration radius.
    Concentration,
    /// Mean error rates under heavy-tailed noise, and median of means.
    HeavyTail,
    /// Average risk with an exceptional discontinuity set.
    Discontinuity,
    /// Anchor layout comparison at fixed N and K.
    Layouts,
    /// Fully diverse vs anchors only vs the two-stage pipeline, plus ablations.
    AcaCompare,
    /// Closed-form plans and the proportional allocation check.
    Allocate,
    /// Endpoint deviation bound and error decomposition audit.
    GronwallAudit,
}

impl From<Command> for ExperimentKind {
    fn from(c: Command) -> Self {
        match c {
            Command::SweepK => ExperimentKind::SweepK,
            Command::ScalingLaw => ExperimentKind::ScalingLaw,
            Command::Concentration => ExperimentKind::Concentration,
            Command::HeavyTail => ExperimentKind::HeavyTail,
            Command::Discontinuity => ExperimentKind::Discontinuity,
            Command::Layouts => ExperimentKind::Layouts,
            Command::AcaCompare => ExperimentKind::AcaCompare,
            Command::Allocate => ExperimentKind::Allocate,
            Command::GronwallAudit => ExperimentKind::GronwallAudit,
        }
    }
}

fn load_config(common: &Common) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    if let Some(trials) = common.trials {
        cfg.trials = Some(trials);
    }
    if let Some(threads) = common.threads {
        cfg.threads = threads;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run() -> anyhow::Result<bool> {
    let cli = Cli::parse();
    let cfg = load_config(&cli.common)?;
    let kind = ExperimentKind::from(cli.command);
    let out = experiments::run(kind, &cfg)?;
    let (csv, summary) = out.write(&cfg)?;
    info!("wrote {} and {}", csv.display(), summary.display());

    for note in &out.notes {
        println!("{note}");
    }
    for (name, value) in &out.metrics {
        println!("{name} = {value}");
    }
    for c in &out.checks {
        let status = if c.passed { "ok" } else { "FAIL" };
        let kind = if c.hard { "hard" } else { "soft" };
        println!("[{status}] {} ({kind}): {}", c.name, c.detail);
    }
    Ok(out.hard_ok())
}
