//! Two-stage anchor-centric adaptation: stabilize a frozen base on core
//! anchors, mine high-deviation probe conditions, then patch the base with a
//! compactly supported residual. Also hosts the baseline strategies.

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::allocation::{largest_remainder, AllocationPlan};
use crate::error::{invalid, Error, Result};
use crate::estimation::{
    anchor_mean, field_error_mean, field_error_sup, fit_surrogate, observe_condition, AssignmentRule,
    ConditionPredictor, Estimator, FitOptions, SurrogatePolicy,
};
use crate::field::{add_structure, ConditionalField, NoiseModel, SeparableField};
use crate::mining::{expand_local, make_probe, probe_candidates, teacher_forced_deviation, DeviationReport, ProbeDemo};
use crate::rng;
use crate::space::{distance, make_layout, ConditionSpace, EvalGrid, LayoutKind};

/// Ground truth, domain and observation noise of one simulated task.
#[derive(Debug, Clone)]
pub struct World<F> {
    pub space: ConditionSpace,
    pub field: F,
    pub noise: NoiseModel,
}

/// `N = N_A + N_probe + N_bd` plus the knobs of each stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetPlan {
    pub n_total: usize,
    pub n_anchor: usize,
    pub n_probe: usize,
    pub n_boundary: usize,
    /// Core anchor count `K`.
    pub k_anchors: usize,
    /// Boundary conditions mined.
    pub k_mined: usize,
    /// Half-width of the ℓ∞ expansion box.
    pub expansion_radius: f64,
}

impl BudgetPlan {
    /// `N_A = 0.8 N`, the rest split evenly between probing and expansion,
    /// `k ≈ N / 30` (2, 3, 5 at 50, 100, 150).
    pub fn default_for(n_total: usize, k_anchors: usize, space: &ConditionSpace) -> Result<Self> {
        let n_anchor = (0.8 * n_total as f64).round() as usize;
        let rest = n_total - n_anchor;
        let n_probe = rest.div_ceil(2);
        let n_boundary = rest - n_probe;
        let k_mined = ((n_total as f64 / 30.0).round() as usize).clamp(1, n_probe.max(1)).min(n_probe);
        let plan = Self {
            n_total,
            n_anchor,
            n_probe,
            n_boundary,
            k_anchors,
            k_mined,
            expansion_radius: 0.05 * min_width(space),
        };
        plan.validate()?;
        Ok(plan)
    }

    /// All of `N` on `K` anchors; no mining.
    pub fn anchors_only(n_total: usize, k_anchors: usize) -> Result<Self> {
        let plan = Self {
            n_total,
            n_anchor: n_total,
            n_probe: 0,
            n_boundary: 0,
            k_anchors,
            k_mined: 0,
            expansion_radius: 1.0,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_anchor + self.n_probe + self.n_boundary != self.n_total {
            return Err(Error::Budget(format!(
                "N_A + N_probe + N_bd = {} + {} + {} != N = {}",
                self.n_anchor, self.n_probe, self.n_boundary, self.n_total
            )));
        }
        if self.n_anchor > 0 && self.k_anchors == 0 {
            return Err(Error::Budget("K must be >= 1 when N_A > 0".into()));
        }
        if self.n_anchor < self.k_anchors {
            return Err(Error::Budget(format!("N_A = {} is below K = {}", self.n_anchor, self.k_anchors)));
        }
        if self.k_mined > self.n_probe {
            return Err(Error::Budget(format!("k = {} exceeds N_probe = {}", self.k_mined, self.n_probe)));
        }
        if self.n_boundary > 0 && self.k_mined == 0 {
            return Err(Error::Budget("N_bd > 0 needs at least one mined condition".into()));
        }
        if !(self.expansion_radius > 0.0) {
            return Err(invalid("expansion radius must be > 0"));
        }
        Ok(())
    }
}

fn min_width(space: &ConditionSpace) -> f64 {
    (0..space.dim()).map(|a| space.width(a)).fold(f64::INFINITY, f64::min)
}

/// Trajectories consumed per stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ledger {
    pub anchor: usize,
    pub probe: usize,
    pub boundary: usize,
}

impl Ledger {
    pub fn total(&self) -> usize {
        self.anchor + self.probe + self.boundary
    }

    /// Hard check against the plan's total.
    pub fn check(&self, n_total: usize) -> Result<()> {
        if self.total() != n_total {
            return Err(Error::Budget(format!("ledger spent {} of N = {n_total}", self.total())));
        }
        Ok(())
    }
}

/// Stage knobs that are not budget counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StageOptions {
    pub layout: LayoutKind,
    pub estimator: Estimator,
    /// Gaussian action noise on probe demos; `None` uses the observation
    /// noise's standard deviation.
    pub sigma_demo: Option<f64>,
    pub horizon: f64,
    pub probe_steps: usize,
    /// Top-k selection when on, random probes of equal count when off.
    pub mining: bool,
    /// Compact residual when on, a globally supported correction when off.
    pub residual: bool,
}

impl Default for StageOptions {
    fn default() -> Self {
        Self {
            layout: LayoutKind::CenterRect,
            estimator: Estimator::SampleMean,
            sigma_demo: None,
            horizon: 1.0,
            probe_steps: 16,
            mining: true,
            residual: true,
        }
    }
}

/// Stage 1: uniform repeats over `K` core anchors; the result is frozen.
pub fn run_stage1<F: SeparableField>(world: &World<F>, plan: &BudgetPlan, opts: &StageOptions, seed: u64) -> Result<(SurrogatePolicy, Ledger)> {
    plan.validate()?;
    if plan.n_anchor < plan.k_anchors || plan.k_anchors == 0 {
        return Err(Error::Budget(format!("N_A = {} cannot cover K = {}", plan.n_anchor, plan.k_anchors)));
    }
    let anchors = make_layout(&world.space, opts.layout, plan.k_anchors, rng::derive(seed, rng::label("layout")))?;
    let alloc = AllocationPlan::uniform(plan.k_anchors, plan.n_anchor)?;
    let fit = FitOptions {
        repeats: &alloc.repeats,
        budget: plan.n_anchor,
        noise: world.noise,
        estimator: opts.estimator,
        rule: AssignmentRule::NearestAnchor,
        seed: rng::derive(seed, rng::label("stage1")),
    };
    let base = fit_surrogate(&world.field, &world.space, &anchors, &fit)?;
    Ok((base, Ledger { anchor: alloc.total(), ..Ledger::default() }))
}

/// Output of the mining stage.
#[derive(Debug, Clone)]
pub struct MiningOutcome {
    pub report: DeviationReport,
    pub demos: Vec<ProbeDemo>,
    /// Indices of the demos reused as Stage-2 data.
    pub reused: Vec<usize>,
    pub consumed: usize,
}

/// Probe `N_probe` candidate conditions, score them on the frozen base and
/// select `k` boundary conditions.
pub fn run_mining<F: SeparableField>(
    base: &SurrogatePolicy,
    world: &World<F>,
    plan: &BudgetPlan,
    opts: &StageOptions,
    seed: u64,
) -> Result<MiningOutcome> {
    if plan.n_probe < plan.k_mined {
        return Err(Error::Budget(format!("N_probe = {} is below k = {}", plan.n_probe, plan.k_mined)));
    }
    let sigma_demo = opts.sigma_demo.unwrap_or_else(|| world.noise.std_dev().unwrap_or(0.0));
    let candidates = probe_candidates(&world.space, plan.n_probe, base.anchors());
    let z0 = vec![0.0; world.field.state_dim()];
    let demos = candidates
        .iter()
        .enumerate()
        .map(|(i, q)| {
            let s = rng::derive_path(seed, &[rng::label("probe"), i as u64]);
            make_probe(&world.field, q, &z0, opts.horizon, opts.probe_steps, sigma_demo, s)
        })
        .collect::<Result<Vec<_>>>()?;
    let scores = demos.iter().map(|d| teacher_forced_deviation(base, d)).collect::<Result<Vec<_>>>()?;
    let mut report = DeviationReport::new(candidates, scores, plan.k_mined)?;
    if !opts.mining && plan.k_mined > 0 {
        let mut r = rng::rng_from(rng::derive(seed, rng::label("random-probes")));
        let mut picked = sample(&mut r, plan.n_probe, plan.k_mined).into_vec();
        picked.sort_unstable();
        report.selected = picked;
    }
    let reused = report.selected.clone();
    Ok(MiningOutcome { report, demos, reused, consumed: plan.n_probe })
}

/// How the boundary corrections are spread over the domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualKind {
    /// Bump `(1 - s²)²` of radius `r_j` around each boundary anchor.
    Compact,
    /// Gaussian-weighted average of all corrections, applied everywhere.
    Global,
}

/// `Δ(p) = Σ ψ_j(p) Δ_j / max(1, Σ ψ_j(p))`; zero before fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualLayer {
    pub kind: ResidualKind,
    pub centers: Vec<Vec<f64>>,
    pub corrections: Vec<Vec<f64>>,
    pub radii: Vec<f64>,
    /// Bandwidth of the global variant.
    pub bandwidth: f64,
}

impl ResidualLayer {
    pub fn zero(kind: ResidualKind) -> Self {
        Self { kind, centers: Vec::new(), corrections: Vec::new(), radii: Vec::new(), bandwidth: 1.0 }
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Whether `p` lies in the support of some bump.
    pub fn in_support(&self, p: &[f64]) -> bool {
        match self.kind {
            ResidualKind::Compact => self.centers.iter().zip(&self.radii).any(|(c, r)| distance(p, c) < *r),
            ResidualKind::Global => !self.is_empty(),
        }
    }

    /// Correction at `p`, or `None` when it is exactly zero.
    pub fn correction(&self, p: &[f64]) -> Option<Vec<f64>> {
        if self.is_empty() {
            return None;
        }
        let weights: Vec<f64> = match self.kind {
            ResidualKind::Compact => self
                .centers
                .iter()
                .zip(&self.radii)
                .map(|(c, r)| {
                    let s = distance(p, c) / r;
                    if s >= 1.0 {
                        0.0
                    } else {
                        (1.0 - s * s).powi(2)
                    }
                })
                .collect(),
            ResidualKind::Global => self
                .centers
                .iter()
                .map(|c| {
                    let d = distance(p, c) / self.bandwidth;
                    (-0.5 * d * d).exp()
                })
                .collect(),
        };
        let total: f64 = weights.iter().sum();
        if total == 0.0 {
            return None;
        }
        let norm = match self.kind {
            ResidualKind::Compact => total.max(1.0),
            ResidualKind::Global => total,
        };
        let m = self.corrections[0].len();
        let mut out = vec![0.0; m];
        for (w, delta) in weights.iter().zip(&self.corrections) {
            out.iter_mut().zip(delta).for_each(|(o, v)| *o += w * v);
        }
        out.iter_mut().for_each(|o| *o /= norm);
        Some(out)
    }
}

/// `f_final = f_base + Δ` with the base frozen.
#[derive(Debug, Clone)]
pub struct CompositePolicy {
    pub base: SurrogatePolicy,
    pub residual: ResidualLayer,
}

impl CompositePolicy {
    pub fn frozen(base: SurrogatePolicy, kind: ResidualKind) -> Self {
        Self { base, residual: ResidualLayer::zero(kind) }
    }
}

impl ConditionPredictor for CompositePolicy {
    fn predict_condition(&self, p: &[f64]) -> Vec<f64> {
        let mut g = self.base.predict_condition(p);
        if let Some(delta) = self.residual.correction(p) {
            g.iter_mut().zip(delta).for_each(|(a, b)| *a += b);
        }
        g
    }
}

impl ConditionalField for CompositePolicy {
    fn state_dim(&self) -> usize {
        self.base.state_dim()
    }

    fn condition_dim(&self) -> usize {
        self.base.condition_dim()
    }

    fn eval_into(&self, z: &[f64], p: &[f64], t: f64, out: &mut [f64]) {
        out.copy_from_slice(&self.predict_condition(p));
        add_structure(out.len(), self.base.coupling(), self.base.drift(), z, t, out);
    }
}

/// Stage 2: expand locally around each mined condition, estimate the field
/// there from the reused probe plus its expansion, and fit the residual.
pub fn run_stage2<F: SeparableField>(
    base: SurrogatePolicy,
    mined: &MiningOutcome,
    world: &World<F>,
    plan: &BudgetPlan,
    opts: &StageOptions,
    seed: u64,
) -> Result<(CompositePolicy, usize)> {
    let kind = if opts.residual { ResidualKind::Compact } else { ResidualKind::Global };
    let selected = &mined.report.selected;
    if selected.is_empty() {
        if plan.n_boundary > 0 {
            return Err(Error::Budget(format!("N_bd = {} cannot be spent without boundary conditions", plan.n_boundary)));
        }
        return Ok((CompositePolicy::frozen(base, kind), 0));
    }
    let counts = largest_remainder(&vec![1.0; selected.len()], plan.n_boundary, 0)?;
    let mut residual = ResidualLayer::zero(kind);
    let mut spent = 0;
    for (j, (&cand, &count)) in selected.iter().zip(&counts).enumerate() {
        let q = &mined.report.candidates[cand];
        let demo = &mined.demos[cand];
        // the probe's first action minus the known structure at (z0, 0)
        let mut obs = vec![0.0; demo.actions[0].len()];
        add_structure(obs.len(), base.coupling(), base.drift(), &demo.states[0], demo.times[0], &mut obs);
        let first: Vec<f64> = demo.actions[0].iter().zip(&obs).map(|(a, s)| a - s).collect();
        let mut local = vec![first];
        if count > 0 {
            let s = rng::derive_path(seed, &[rng::label("expand"), j as u64]);
            for (e, x) in expand_local(q, plan.expansion_radius, count, &world.space, s)?.iter().enumerate() {
                let stream = rng::derive_path(seed, &[rng::label("expand-obs"), j as u64, e as u64]);
                local.extend(observe_condition(&world.field, x, 1, &world.noise, stream));
            }
            spent += count;
        }
        let estimate = anchor_mean(&local)?;
        let base_q = base.predict_condition(q);
        let delta: Vec<f64> = estimate.iter().zip(&base_q).map(|(a, b)| a - b).collect();
        let radius = 0.5 * base.nearest(q).1;
        residual.centers.push(q.clone());
        residual.corrections.push(delta);
        residual.radii.push(radius);
    }
    if kind == ResidualKind::Global {
        residual.bandwidth = 0.5 * min_width(&world.space);
    }
    if spent != plan.n_boundary {
        return Err(Error::Budget(format!("stage 2 spent {spent} of N_bd = {}", plan.n_boundary)));
    }
    Ok((CompositePolicy { base, residual }, spent))
}

/// Result of a full ACA run.
#[derive(Debug, Clone)]
pub struct AcaRun {
    pub policy: CompositePolicy,
    pub mining: MiningOutcome,
    pub ledger: Ledger,
}

pub fn run_aca<F: SeparableField>(world: &World<F>, plan: &BudgetPlan, opts: &StageOptions, seed: u64) -> Result<AcaRun> {
    let (base, mut ledger) = run_stage1(world, plan, opts, seed)?;
    let mining = run_mining(&base, world, plan, opts, rng::derive(seed, rng::label("mining")))?;
    ledger.probe = mining.consumed;
    let (policy, spent) = run_stage2(base, &mining, world, plan, opts, rng::derive(seed, rng::label("stage2")))?;
    ledger.boundary = spent;
    ledger.check(plan.n_total)?;
    Ok(AcaRun { policy, mining, ledger })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyTag {
    FullyDiverse,
    AnchorsOnly,
    Aca,
}

impl StrategyTag {
    pub const ALL: [StrategyTag; 3] = [StrategyTag::FullyDiverse, StrategyTag::AnchorsOnly, StrategyTag::Aca];

    pub fn tag(self) -> &'static str {
        match self {
            StrategyTag::FullyDiverse => "fully_diverse",
            StrategyTag::AnchorsOnly => "anchors_only",
            StrategyTag::Aca => "aca",
        }
    }
}

impl fmt::Display for StrategyTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for StrategyTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StrategyTag::ALL
            .iter()
            .copied()
            .find(|t| t.tag() == s)
            .ok_or_else(|| invalid(format!("unknown strategy '{s}'")))
    }
}

/// What a strategy needs beyond the budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    /// Anchor count for `anchors_only` and `aca`.
    pub k_anchors: usize,
    /// Layout of the single-shot conditions of `fully_diverse`.
    pub diverse_layout: LayoutKind,
    pub stage: StageOptions,
}

/// Policy plus the quantities every comparison reports.
#[derive(Debug, Clone)]
pub struct StrategyOutcome {
    pub strategy: StrategyTag,
    pub policy: CompositePolicy,
    pub ledger: Ledger,
    pub sup_error: f64,
    pub mean_error: f64,
    pub max_anchor_error: f64,
    pub fill_distance: f64,
}

/// Spend exactly `N` trajectories with the given strategy.
pub fn run_strategy<F: SeparableField>(
    world: &World<F>,
    strategy: StrategyTag,
    n_total: usize,
    cfg: &StrategyConfig,
    grid: &EvalGrid,
    seed: u64,
) -> Result<StrategyOutcome> {
    let (policy, ledger) = match strategy {
        StrategyTag::FullyDiverse => {
            let plan = BudgetPlan::anchors_only(n_total, n_total)?;
            let opts = StageOptions { layout: cfg.diverse_layout, ..cfg.stage };
            let (base, ledger) = run_stage1(world, &plan, &opts, seed)?;
            (CompositePolicy::frozen(base, ResidualKind::Compact), ledger)
        }
        StrategyTag::AnchorsOnly => {
            let plan = BudgetPlan::anchors_only(n_total, cfg.k_anchors)?;
            let (base, ledger) = run_stage1(world, &plan, &cfg.stage, seed)?;
            (CompositePolicy::frozen(base, ResidualKind::Compact), ledger)
        }
        StrategyTag::Aca => {
            let plan = BudgetPlan::default_for(n_total, cfg.k_anchors, &world.space)?;
            let run = run_aca(world, &plan, &cfg.stage, seed)?;
            (run.policy, run.ledger)
        }
    };
    ledger.check(n_total)?;
    let (sup_error, _) = field_error_sup(&policy, &world.field, grid);
    let mean_error = field_error_mean(&policy, &world.field, grid);
    let anchors = policy.base.anchors();
    let fill = grid.iter().map(|p| policy.base.nearest(p).1).fold(0.0, f64::max);
    let max_anchor_error = policy.base.max_anchor_error(&world.field);
    let _ = anchors;
    Ok(StrategyOutcome { strategy, policy, ledger, sup_error, mean_error, max_anchor_error, fill_distance: fill })
}
