//! Runner results: one CSV table, aggregates with confidence half-widths,
//! scalar metrics and pass/fail checks.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use serde::Serialize;

use super::config::ExperimentConfig;
use super::ExperimentKind;
use crate::error::Result;
use crate::stats::Summary;

/// Format CSV cells from anything displayable.
#[macro_export]
macro_rules! cells {
    ($($x:expr),* $(,)?) => {
        vec![$($x.to_string()),*]
    };
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Hard invariants decide the exit status; the rest are statistical claims.
    pub hard: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

#[derive(Debug, Clone)]
pub struct RunnerOutput {
    pub kind: ExperimentKind,
    pub table: Table,
    pub aggregates: BTreeMap<String, Summary>,
    pub metrics: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
    /// Free-form lines printed by the CLI (closed-form plans and the like).
    pub notes: Vec<String>,
}

#[derive(Serialize)]
struct SummaryDocument<'a> {
    tool: &'static str,
    version: &'static str,
    runner: &'static str,
    seed: u64,
    threads: usize,
    rows: usize,
    hard_invariants_held: bool,
    config: &'a ExperimentConfig,
    metrics: &'a BTreeMap<String, f64>,
    aggregates: &'a BTreeMap<String, Summary>,
    checks: &'a [Check],
    notes: &'a [String],
}

impl RunnerOutput {
    pub fn new(kind: ExperimentKind, header: &[&str]) -> Self {
        Self {
            kind,
            table: Table::new(header),
            aggregates: BTreeMap::new(),
            metrics: BTreeMap::new(),
            checks: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn metric(&mut self, name: impl Into<String>, value: f64) {
        self.metrics.insert(name.into(), value);
    }

    pub fn aggregate(&mut self, name: impl Into<String>, values: &[f64]) {
        self.aggregates.insert(name.into(), Summary::of(values));
    }

    pub fn check(&mut self, name: impl Into<String>, passed: bool, hard: bool, detail: impl Into<String>) {
        self.checks.push(Check { name: name.into(), passed, hard, detail: detail.into() });
    }

    pub fn hard_ok(&self) -> bool {
        self.checks.iter().filter(|c| c.hard).all(|c| c.passed)
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn find_check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn csv(&self) -> Result<String> {
        self.table.to_csv()
    }

    pub fn summary_json(&self, cfg: &ExperimentConfig) -> Result<String> {
        let doc = SummaryDocument {
            tool: "aca",
            version: env!("CARGO_PKG_VERSION"),
            runner: self.kind.command(),
            seed: cfg.seed,
            threads: cfg.threads,
            rows: self.table.rows.len(),
            hard_invariants_held: self.hard_ok(),
            config: cfg,
            metrics: &self.metrics,
            aggregates: &self.aggregates,
            checks: &self.checks,
            notes: &self.notes,
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    /// Write `<stem>.csv` and `<stem>_summary.json` under `cfg.out`.
    pub fn write(&self, cfg: &ExperimentConfig) -> Result<(PathBuf, PathBuf)> {
        fs::create_dir_all(&cfg.out)?;
        let stem = self.kind.stem();
        let csv_path = cfg.out.join(format!("{stem}.csv"));
        let summary_path = cfg.out.join(format!("{stem}_summary.json"));
        fs::write(&csv_path, self.csv()?)?;
        fs::write(&summary_path, self.summary_json(cfg)?)?;
        Ok((csv_path, summary_path))
    }
}
