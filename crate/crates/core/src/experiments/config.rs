//! Experiment configuration. Every field has a default and unknown keys are
//! rejected; command-line flags are applied on top of the parsed file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{sample_field_with, FieldSpec, NoiseModel, SyntheticField};
use crate::rollout::SuccessConfig;
use crate::space::LayoutKind;

fn bad(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
    pub out: PathBuf,
    /// Overrides the main trial count of whichever runner is invoked.
    pub trials: Option<usize>,
    pub world: WorldConfig,
    pub sweep_k: SweepKConfig,
    pub scaling_law: ScalingLawConfig,
    pub concentration: ConcentrationConfig,
    pub heavy_tail: HeavyTailConfig,
    pub discontinuity: DiscontinuityConfig,
    pub layouts: LayoutsConfig,
    pub aca_compare: AcaCompareConfig,
    pub allocate: AllocateConfig,
    pub gronwall_audit: GronwallConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 20240601,
            threads: 0,
            out: PathBuf::from("results"),
            trials: None,
            world: WorldConfig::default(),
            sweep_k: SweepKConfig::default(),
            scaling_law: ScalingLawConfig::default(),
            concentration: ConcentrationConfig::default(),
            heavy_tail: HeavyTailConfig::default(),
            discontinuity: DiscontinuityConfig::default(),
            layouts: LayoutsConfig::default(),
            aca_compare: AcaCompareConfig::default(),
            allocate: AllocateConfig::default(),
            gronwall_audit: GronwallConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| bad(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| bad(e.to_string()))
    }

    /// Trial count for a runner whose own default is `own`.
    pub fn trials_or(&self, own: usize) -> usize {
        self.trials.unwrap_or(own)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == Some(0) {
            return Err(bad("trials must be >= 1"));
        }
        self.world.validate()?;
        self.sweep_k.validate()?;
        self.scaling_law.validate()?;
        self.concentration.validate()?;
        self.heavy_tail.validate()?;
        self.discontinuity.validate()?;
        self.layouts.validate()?;
        self.aca_compare.validate()?;
        self.allocate.validate()?;
        self.gronwall_audit.validate()
    }
}

fn check_fraction(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(bad(format!("{name} must lie in [0, 1], got {v}")))
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(bad(format!("{name} must be positive, got {v}")))
    }
}

fn check_count(name: &str, v: usize) -> Result<()> {
    if v == 0 {
        Err(bad(format!("{name} must be >= 1")))
    } else {
        Ok(())
    }
}

/// Ground-truth field family shared by the runners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    /// State dimension.
    pub m: usize,
    pub num_terms: usize,
    pub lipschitz_p: f64,
    pub lipschitz_z: f64,
    pub freq_range: (f64, f64),
    pub drift_scale: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self { m: 2, num_terms: 4, lipschitz_p: 1.0, lipschitz_z: 0.5, freq_range: (2.0, 6.0), drift_scale: 0.5 }
    }
}

impl WorldConfig {
    pub fn spec(&self, d: usize) -> FieldSpec {
        FieldSpec {
            freq_range: self.freq_range,
            drift_scale: self.drift_scale,
            ..FieldSpec::new(d, self.m, self.num_terms, self.lipschitz_p, self.lipschitz_z)
        }
    }

    pub fn field(&self, d: usize, seed: u64) -> Result<SyntheticField> {
        sample_field_with(seed, &self.spec(d))
    }

    fn validate(&self) -> Result<()> {
        check_count("world.m", self.m)?;
        check_count("world.num_terms", self.num_terms)?;
        check_positive("world.lipschitz_p", self.lipschitz_p)?;
        if !(self.lipschitz_z >= 0.0) {
            return Err(bad("world.lipschitz_z must be >= 0"));
        }
        if !(self.freq_range.0 > 0.0 && self.freq_range.1 >= self.freq_range.0) {
            return Err(bad("world.freq_range must satisfy 0 < lo <= hi"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepKConfig {
    pub d: usize,
    pub n: usize,
    pub ks: Vec<usize>,
    pub layout: LayoutKind,
    pub worlds: usize,
    /// Noise draws per world and K.
    pub draws: usize,
    pub resolution: usize,
    /// Fixed noise level; calibrated per world when absent.
    pub sigma: Option<f64>,
    /// Calibration point `K_ref = fraction * N` where the two bound terms are equal.
    pub k_ref_fraction: f64,
    pub kappa_samples: usize,
    /// Failure probability of the bound curve, split over the K list.
    pub delta: f64,
    pub interior_fraction_min: f64,
    pub diverse_gap_min: f64,
    pub bound_fraction_min: f64,
}

impl Default for SweepKConfig {
    fn default() -> Self {
        Self {
            d: 2,
            n: 100,
            ks: vec![1, 2, 4, 8, 16, 32, 64, 100],
            layout: LayoutKind::LowDiscrepancy,
            worlds: 50,
            draws: 10,
            resolution: 101,
            sigma: None,
            k_ref_fraction: 0.25,
            kappa_samples: 20_000,
            delta: 0.05,
            interior_fraction_min: 0.9,
            diverse_gap_min: 0.2,
            bound_fraction_min: 0.95,
        }
    }
}

impl SweepKConfig {
    fn validate(&self) -> Result<()> {
        check_count("sweep_k.d", self.d)?;
        check_count("sweep_k.worlds", self.worlds)?;
        check_count("sweep_k.draws", self.draws)?;
        if self.ks.len() < 3 {
            return Err(bad("sweep_k.ks needs at least three values"));
        }
        if self.ks.windows(2).any(|w| w[0] >= w[1]) || self.ks[0] == 0 || *self.ks.last().unwrap() > self.n {
            return Err(bad(format!("sweep_k.ks must increase strictly within [1, N = {}]", self.n)));
        }
        if let Some(s) = self.sigma {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(bad("sweep_k.sigma must be >= 0"));
            }
        }
        check_fraction("sweep_k.k_ref_fraction", self.k_ref_fraction)?;
        check_fraction("sweep_k.delta", self.delta)?;
        check_fraction("sweep_k.interior_fraction_min", self.interior_fraction_min)?;
        check_fraction("sweep_k.bound_fraction_min", self.bound_fraction_min)?;
        check_count("sweep_k.kappa_samples", self.kappa_samples)?;
        check_count("sweep_k.resolution", self.resolution)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalingLawConfig {
    pub dims: Vec<usize>,
    pub ns: Vec<usize>,
    pub worlds: usize,
    pub draws: usize,
    /// Budget at which σ is calibrated; σ then stays fixed across N.
    pub n_ref: usize,
    pub k_ref_fraction: f64,
    /// Evaluation grid resolution per entry of `dims`.
    pub resolutions: Vec<usize>,
    /// Largest anchor count scanned.
    pub max_k: usize,
    /// Neighbours on each side used to refine the argmin in log K.
    pub half_window: usize,
    pub kappa_samples: usize,
    pub slope_tolerance: f64,
}

impl Default for ScalingLawConfig {
    fn default() -> Self {
        Self {
            dims: vec![1, 2],
            ns: vec![64, 128, 256, 512, 1024],
            worlds: 30,
            draws: 1,
            n_ref: 64,
            k_ref_fraction: 0.25,
            resolutions: vec![2001, 201],
            max_k: 300,
            half_window: 2,
            kappa_samples: 20_000,
            slope_tolerance: 0.15,
        }
    }
}

impl ScalingLawConfig {
    fn validate(&self) -> Result<()> {
        if self.dims.is_empty() || self.dims.contains(&0) {
            return Err(bad("scaling_law.dims must be non-empty and positive"));
        }
        if self.resolutions.len() != self.dims.len() {
            return Err(bad("scaling_law.resolutions needs one entry per dimension"));
        }
        if self.ns.len() < 4 || self.ns.windows(2).any(|w| w[0] >= w[1]) || self.ns[0] == 0 {
            return Err(bad("scaling_law.ns needs at least four strictly increasing budgets"));
        }
        let span = (*self.ns.last().unwrap() as f64 / self.ns[0] as f64).log10();
        // 64..1024 is a factor of 16
        if span < 1.2 - 1e-9 {
            return Err(bad(format!("scaling_law.ns spans {span:.2} decades, need >= 1.2")));
        }
        check_count("scaling_law.worlds", self.worlds)?;
        check_count("scaling_law.draws", self.draws)?;
        check_count("scaling_law.n_ref", self.n_ref)?;
        check_count("scaling_law.max_k", self.max_k)?;
        check_count("scaling_law.kappa_samples", self.kappa_samples)?;
        check_fraction("scaling_law.k_ref_fraction", self.k_ref_fraction)?;
        check_positive("scaling_law.slope_tolerance", self.slope_tolerance)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConcentrationConfig {
    pub d: usize,
    pub k: usize,
    pub n: usize,
    pub sigma: f64,
    pub trials: usize,
    /// Failure probabilities whose coverage is asserted.
    pub deltas: Vec<f64>,
    /// Additional failure probabilities reported in the monotone scan.
    pub scan: Vec<f64>,
}

impl Default for ConcentrationConfig {
    fn default() -> Self {
        Self {
            d: 2,
            k: 8,
            n: 16,
            sigma: 1.0,
            trials: 2000,
            deltas: vec![0.1, 0.05],
            scan: vec![0.5, 0.3, 0.2, 0.1, 0.05, 0.02, 0.01, 0.001],
        }
    }
}

impl ConcentrationConfig {
    fn validate(&self) -> Result<()> {
        check_count("concentration.k", self.k)?;
        check_count("concentration.n", self.n)?;
        check_count("concentration.trials", self.trials)?;
        check_positive("concentration.sigma", self.sigma)?;
        for &delta in self.deltas.iter().chain(&self.scan) {
            if !(delta > 0.0 && delta < 1.0) {
                return Err(bad(format!("concentration delta {delta} must lie in (0, 1)")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeavyTailConfig {
    pub ns: Vec<usize>,
    pub trials: usize,
    /// Moment orders; `q < 2` uses Pareto tails of index `q`, `q = 2` Gaussian noise.
    pub qs: Vec<f64>,
    pub scale: f64,
    pub slope_tolerance: f64,
    pub mom_alpha: f64,
    pub mom_n: usize,
    pub mom_blocks: usize,
    pub mom_trials: usize,
}

impl Default for HeavyTailConfig {
    fn default() -> Self {
        Self {
            ns: vec![10, 32, 100, 316, 1000, 3162, 10_000],
            trials: 2000,
            qs: vec![1.25, 1.5, 2.0],
            scale: 1.0,
            slope_tolerance: 0.1,
            mom_alpha: 1.5,
            mom_n: 100,
            mom_blocks: 9,
            mom_trials: 5000,
        }
    }
}

impl HeavyTailConfig {
    fn validate(&self) -> Result<()> {
        if self.ns.len() < 3 || self.ns.windows(2).any(|w| w[0] >= w[1]) || self.ns[0] == 0 {
            return Err(bad("heavy_tail.ns needs at least three increasing sample sizes"));
        }
        if self.qs.iter().any(|&q| !(q > 1.0 && q <= 2.0)) {
            return Err(bad("heavy_tail.qs must lie in (1, 2]"));
        }
        check_count("heavy_tail.trials", self.trials)?;
        check_positive("heavy_tail.scale", self.scale)?;
        check_positive("heavy_tail.slope_tolerance", self.slope_tolerance)?;
        if !(self.mom_alpha > 1.0) {
            return Err(bad("heavy_tail.mom_alpha must exceed 1"));
        }
        check_count("heavy_tail.mom_blocks", self.mom_blocks)?;
        check_count("heavy_tail.mom_trials", self.mom_trials)?;
        if self.mom_blocks > self.mom_n {
            return Err(bad("heavy_tail.mom_blocks cannot exceed mom_n"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscontinuityConfig {
    pub d: usize,
    pub k: usize,
    pub layout: LayoutKind,
    pub repeats: usize,
    pub noise: NoiseModel,
    /// Volume fractions of the exceptional set; 0 is the smooth field.
    pub epsilons: Vec<f64>,
    pub jump: f64,
    pub worlds: usize,
    pub resolution: usize,
}

impl Default for DiscontinuityConfig {
    fn default() -> Self {
        Self {
            d: 2,
            k: 16,
            layout: LayoutKind::LowDiscrepancy,
            repeats: 10,
            noise: NoiseModel::Gaussian { sigma: 0.05 },
            epsilons: vec![0.0, 0.01, 0.05, 0.1],
            jump: 1.0,
            worlds: 100,
            resolution: 81,
        }
    }
}

impl DiscontinuityConfig {
    fn validate(&self) -> Result<()> {
        check_count("discontinuity.k", self.k)?;
        check_count("discontinuity.repeats", self.repeats)?;
        check_count("discontinuity.worlds", self.worlds)?;
        self.noise.validate()?;
        if self.epsilons.iter().any(|&e| !(0.0..1.0).contains(&e)) {
            return Err(bad("discontinuity.epsilons must lie in [0, 1)"));
        }
        if !(self.jump >= 0.0) {
            return Err(bad("discontinuity.jump must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LayoutsConfig {
    pub d: usize,
    pub n: usize,
    pub k: usize,
    pub layouts: Vec<LayoutKind>,
    /// Layout of the single-shot baseline.
    pub diverse_layout: LayoutKind,
    pub worlds: usize,
    pub draws: usize,
    pub resolution: usize,
    pub sigma: Option<f64>,
    pub k_ref_fraction: f64,
    pub kappa_samples: usize,
}

impl Default for LayoutsConfig {
    fn default() -> Self {
        Self {
            d: 2,
            n: 100,
            k: 16,
            layouts: vec![
                LayoutKind::Grid,
                LayoutKind::LowDiscrepancy,
                LayoutKind::Random,
                LayoutKind::CenterRect,
                LayoutKind::CenterCircle,
                LayoutKind::TopLeft,
            ],
            diverse_layout: LayoutKind::LowDiscrepancy,
            worlds: 50,
            draws: 5,
            resolution: 101,
            sigma: None,
            k_ref_fraction: 0.25,
            kappa_samples: 20_000,
        }
    }
}

impl LayoutsConfig {
    fn validate(&self) -> Result<()> {
        check_count("layouts.k", self.k)?;
        check_count("layouts.worlds", self.worlds)?;
        check_count("layouts.draws", self.draws)?;
        if self.k > self.n {
            return Err(bad("layouts.k cannot exceed layouts.n"));
        }
        if self.layouts.is_empty() || self.layouts.contains(&LayoutKind::Custom) {
            return Err(bad("layouts.layouts must list catalog layouts"));
        }
        check_fraction("layouts.k_ref_fraction", self.k_ref_fraction)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcaCompareConfig {
    pub d: usize,
    pub budgets: Vec<usize>,
    pub k_anchors: usize,
    pub layout: LayoutKind,
    pub diverse_layout: LayoutKind,
    pub worlds: usize,
    pub resolution: usize,
    /// Observation noise; calibrated per world when absent.
    pub sigma: Option<f64>,
    /// Field family of the ACA worlds; the shared world config when absent.
    pub world: Option<WorldConfig>,
    pub success: SuccessConfig,
    /// Success threshold; per world, the median endpoint deviation of the
    /// fully diverse baseline at `tau_budget` when absent.
    pub tau: Option<f64>,
    pub tau_budget: usize,
    pub ablation_budget: usize,
    /// Low and high budgets of the sample-efficiency comparison.
    pub efficiency_budgets: (usize, usize),
    pub ablation_fraction_min: f64,
    pub efficiency_fraction_min: f64,
    pub region_fraction_min: f64,
}

impl Default for AcaCompareConfig {
    fn default() -> Self {
        Self {
            d: 2,
            budgets: vec![50, 100, 150],
            k_anchors: 6,
            layout: LayoutKind::CenterRect,
            diverse_layout: LayoutKind::LowDiscrepancy,
            worlds: 100,
            resolution: 61,
            sigma: None,
            world: None,
            success: SuccessConfig { tau: 0.1, horizon: 1.0, steps: 20, trials: 100 },
            tau: None,
            tau_budget: 100,
            ablation_budget: 100,
            efficiency_budgets: (50, 150),
            ablation_fraction_min: 0.7,
            efficiency_fraction_min: 0.6,
            region_fraction_min: 0.8,
        }
    }
}

impl AcaCompareConfig {
    fn validate(&self) -> Result<()> {
        check_count("aca_compare.k_anchors", self.k_anchors)?;
        check_count("aca_compare.worlds", self.worlds)?;
        if self.budgets.is_empty() {
            return Err(bad("aca_compare.budgets must not be empty"));
        }
        for n in [self.tau_budget, self.ablation_budget, self.efficiency_budgets.0, self.efficiency_budgets.1] {
            if !self.budgets.contains(&n) {
                return Err(bad(format!("aca_compare budget {n} is not listed in budgets")));
            }
        }
        if let Some(w) = &self.world {
            w.validate()?;
        }
        self.success.validate()?;
        check_fraction("aca_compare.ablation_fraction_min", self.ablation_fraction_min)?;
        check_fraction("aca_compare.efficiency_fraction_min", self.efficiency_fraction_min)?;
        check_fraction("aca_compare.region_fraction_min", self.region_fraction_min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AllocateConfig {
    pub d: usize,
    pub c_est: f64,
    pub sigma: f64,
    pub lipschitz: f64,
    pub c_fill: f64,
    /// Budgets of the printed anchor-count table.
    pub ns: Vec<usize>,
    /// Variance proxies of the printed proportional plan.
    pub sigmas: Vec<f64>,
    pub plan_n: usize,
    /// Random σ vectors in the Monte Carlo comparison.
    pub vectors: usize,
    pub mc_k: usize,
    pub mc_n: usize,
    pub mc_trials: usize,
    pub sigma_range: (f64, f64),
    pub fraction_min: f64,
}

impl Default for AllocateConfig {
    fn default() -> Self {
        Self {
            d: 2,
            c_est: 1.0,
            sigma: 1.0,
            lipschitz: 1.0,
            c_fill: 1.0,
            ns: vec![50, 100, 150, 400, 1000],
            sigmas: vec![1.0, 1.0, std::f64::consts::SQRT_2],
            plan_n: 100,
            vectors: 500,
            mc_k: 8,
            mc_n: 200,
            mc_trials: 400,
            sigma_range: (0.1, 2.0),
            fraction_min: 0.95,
        }
    }
}

impl AllocateConfig {
    fn validate(&self) -> Result<()> {
        check_count("allocate.d", self.d)?;
        for (name, v) in [("c_est", self.c_est), ("sigma", self.sigma), ("lipschitz", self.lipschitz), ("c_fill", self.c_fill)] {
            check_positive(&format!("allocate.{name}"), v)?;
        }
        if self.sigmas.is_empty() || self.plan_n < self.sigmas.len() {
            return Err(bad("allocate.sigmas must be non-empty and plan_n >= its length"));
        }
        if self.mc_n < self.mc_k || self.mc_k == 0 {
            return Err(bad("allocate.mc_n must be >= mc_k >= 1"));
        }
        if !(self.sigma_range.0 > 0.0 && self.sigma_range.1 >= self.sigma_range.0) {
            return Err(bad("allocate.sigma_range must satisfy 0 < lo <= hi"));
        }
        check_count("allocate.vectors", self.vectors)?;
        check_count("allocate.mc_trials", self.mc_trials)?;
        check_fraction("allocate.fraction_min", self.fraction_min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GronwallConfig {
    pub d: usize,
    pub rollouts: usize,
    pub horizon: f64,
    pub steps: usize,
    pub slack: f64,
    /// Worlds of the coverage/estimation decomposition check.
    pub decomposition_worlds: usize,
    pub resolution: usize,
    pub max_k: usize,
    pub max_sigma: f64,
}

impl Default for GronwallConfig {
    fn default() -> Self {
        Self {
            d: 2,
            rollouts: 500,
            horizon: 1.0,
            steps: 200,
            slack: 1e-6,
            decomposition_worlds: 1000,
            resolution: 61,
            max_k: 40,
            max_sigma: 0.5,
        }
    }
}

impl GronwallConfig {
    fn validate(&self) -> Result<()> {
        check_count("gronwall_audit.rollouts", self.rollouts)?;
        check_count("gronwall_audit.steps", self.steps)?;
        check_count("gronwall_audit.decomposition_worlds", self.decomposition_worlds)?;
        check_count("gronwall_audit.max_k", self.max_k)?;
        check_positive("gronwall_audit.horizon", self.horizon)?;
        if !(self.slack >= 0.0 && self.max_sigma >= 0.0) {
            return Err(bad("gronwall_audit.slack and max_sigma must be >= 0"));
        }
        Ok(())
    }
}
