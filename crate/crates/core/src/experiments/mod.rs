//! Seeded experiment runners. Each runner fills one CSV table plus a summary
//! document; trials run in parallel and are collected in trial order, so the
//! CSV is independent of the thread count.

mod aca;
mod allocate;
mod common;
pub mod config;
mod discontinuity;
mod gronwall;
mod layouts;
mod noise;
pub mod output;
mod sweep;

use std::fmt;
use std::str::FromStr;

pub use config::ExperimentConfig;
pub use output::{Check, RunnerOutput, Table};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExperimentKind {
    SweepK,
    ScalingLaw,
    Concentration,
    HeavyTail,
    Discontinuity,
    Layouts,
    AcaCompare,
    Allocate,
    GronwallAudit,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 9] = [
        ExperimentKind::SweepK,
        ExperimentKind::ScalingLaw,
        ExperimentKind::Concentration,
        ExperimentKind::HeavyTail,
        ExperimentKind::Discontinuity,
        ExperimentKind::Layouts,
        ExperimentKind::AcaCompare,
        ExperimentKind::Allocate,
        ExperimentKind::GronwallAudit,
    ];

    /// Subcommand name.
    pub fn command(self) -> &'static str {
        match self {
            ExperimentKind::SweepK => "sweep-k",
            ExperimentKind::ScalingLaw => "scaling-law",
            ExperimentKind::Concentration => "concentration",
            ExperimentKind::HeavyTail => "heavy-tail",
            ExperimentKind::Discontinuity => "discontinuity",
            ExperimentKind::Layouts => "layouts",
            ExperimentKind::AcaCompare => "aca-compare",
            ExperimentKind::Allocate => "allocate",
            ExperimentKind::GronwallAudit => "gronwall-audit",
        }
    }

    /// File stem of the runner's outputs.
    pub fn stem(self) -> String {
        self.command().replace('-', "_")
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.command())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentKind::ALL
            .iter()
            .copied()
            .find(|k| k.command() == s || k.stem() == s)
            .ok_or_else(|| invalid(format!("unknown experiment '{s}'")))
    }
}

/// Validate the config and run one experiment.
pub fn run(kind: ExperimentKind, cfg: &ExperimentConfig) -> Result<RunnerOutput> {
    cfg.validate()?;
    log::info!("running {kind} with seed {} on {} threads", cfg.seed, cfg.threads);
    match kind {
        ExperimentKind::SweepK => sweep::run_sweep_k(cfg),
        ExperimentKind::ScalingLaw => sweep::run_scaling_law(cfg),
        ExperimentKind::Concentration => noise::run_concentration(cfg),
        ExperimentKind::HeavyTail => noise::run_heavy_tail(cfg),
        ExperimentKind::Discontinuity => discontinuity::run_discontinuity(cfg),
        ExperimentKind::Layouts => layouts::run_layouts(cfg),
        ExperimentKind::AcaCompare => aca::run_aca_compare(cfg),
        ExperimentKind::Allocate => allocate::run_allocate(cfg),
        ExperimentKind::GronwallAudit => gronwall::run_gronwall_audit(cfg),
    }
}

pub use common::{calibrated_sigma, expected_max_norm};
