//! Per-anchor estimators and the surrogate policies built from them.
//!
//! Anchor observations are taken at the canonical query `z = 0, t = 0`,
//! which for a separable field is exactly `g(p_i)` plus noise. The learner
//! is given the structure `(M, v)` and only estimates `g` at the anchors.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::field::{add_structure, norm, ConditionalField, NoiseModel, SeparableField};
use crate::rng;
use crate::space::{self, AnchorIndex, AnchorSet, ConditionSpace, EvalGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Estimator {
    SampleMean,
    /// Blocks are clamped to the repeat count at each anchor.
    MedianOfMeans { blocks: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorEstimate {
    pub index: usize,
    pub estimate: Vec<f64>,
    pub repeats: usize,
    pub estimator: Estimator,
}

/// Coordinate-wise arithmetic mean, accumulated as offsets from the first
/// observation so identical observations reproduce themselves exactly.
pub fn anchor_mean(observations: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = observations.first().ok_or(Error::Empty("observations"))?;
    let m = first.len();
    let mut acc = vec![0.0; m];
    for y in observations {
        if y.len() != m {
            return Err(Error::DimensionMismatch { expected: m, got: y.len() });
        }
        acc.iter_mut().zip(y.iter().zip(first)).for_each(|(a, (v, f))| *a += v - f);
    }
    let n = observations.len() as f64;
    Ok(first.iter().zip(&acc).map(|(f, a)| f + a / n).collect())
}

/// Coordinate-wise median of contiguous block means. Block sizes differ by
/// at most one, the larger blocks first.
pub fn median_of_means(observations: &[Vec<f64>], num_blocks: usize) -> Result<Vec<f64>> {
    let n = observations.len();
    if n == 0 {
        return Err(Error::Empty("observations"));
    }
    if num_blocks == 0 || num_blocks > n {
        return Err(invalid(format!("num_blocks must lie in 1..={n}, got {num_blocks}")));
    }
    let base = n / num_blocks;
    let extra = n % num_blocks;
    let mut means = Vec::with_capacity(num_blocks);
    let mut start = 0;
    for b in 0..num_blocks {
        let len = base + usize::from(b < extra);
        means.push(anchor_mean(&observations[start..start + len])?);
        start += len;
    }
    let m = means[0].len();
    let mut column = vec![0.0; num_blocks];
    Ok((0..m)
        .map(|c| {
            column.iter_mut().zip(&means).for_each(|(x, mu)| *x = mu[c]);
            median_in_place(&mut column)
        })
        .collect())
}

fn median_in_place(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

pub fn estimate(observations: &[Vec<f64>], estimator: Estimator) -> Result<Vec<f64>> {
    match estimator {
        Estimator::SampleMean => anchor_mean(observations),
        Estimator::MedianOfMeans { blocks } => median_of_means(observations, blocks.clamp(1, observations.len().max(1))),
    }
}

/// Radius `σ sqrt(2 m log(2 m K / δ) / n)` that holds for all `K` anchors
/// simultaneously with probability at least `1 - δ`.
pub fn concentration_radius(sigma: f64, n: usize, m: usize, k: usize, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid(format!("delta must lie in (0, 1), got {delta}")));
    }
    if !(sigma > 0.0) || n == 0 || m == 0 || k == 0 {
        return Err(invalid("sigma, n, m and K must be positive"));
    }
    let (n, m, k) = (n as f64, m as f64, k as f64);
    Ok(sigma * (2.0 * m * (2.0 * m * k / delta).ln() / n).sqrt())
}

/// How a query condition is mapped to anchor estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AssignmentRule {
    NearestAnchor,
    /// Normalized Gaussian weights; bandwidth defaults to the fill distance.
    Kernel { bandwidth: Option<f64> },
}

/// Fitted policy `f̂(z, p, t) = ĝ(p) + M z + v t`.
#[derive(Debug, Clone, Serialize)]
pub struct SurrogatePolicy {
    anchors: AnchorSet,
    estimates: Vec<AnchorEstimate>,
    rule: AssignmentRule,
    bandwidth: Option<f64>,
    coupling: Vec<f64>,
    drift: Vec<f64>,
    l_hat: Option<f64>,
    #[serde(skip)]
    index: AnchorIndex,
}

/// Observation seed for repeat `r` at anchor `i`. Each anchor owns its
/// stream, so repeat prefixes are shared across allocations of one world.
pub fn anchor_stream(seed: u64, i: usize) -> u64 {
    rng::derive_path(seed, &[rng::label("anchor"), i as u64])
}

/// Draw `n` canonical-query observations at `p` from a dedicated stream.
pub fn observe_condition<F: SeparableField + ?Sized>(field: &F, p: &[f64], n: usize, noise: &NoiseModel, stream: u64) -> Vec<Vec<f64>> {
    let g = field.condition_part(p);
    let mut r = rng::rng_from(stream);
    (0..n).map(|_| g.iter().map(|v| v + noise.sample(&mut r)).collect()).collect()
}

/// Inputs to [`fit_surrogate`] apart from the field and the anchors.
#[derive(Debug, Clone, Copy)]
pub struct FitOptions<'a> {
    pub repeats: &'a [usize],
    pub budget: usize,
    pub noise: NoiseModel,
    pub estimator: Estimator,
    pub rule: AssignmentRule,
    pub seed: u64,
}

pub fn fit_surrogate<F: SeparableField + ?Sized>(
    field: &F,
    space: &ConditionSpace,
    anchors: &AnchorSet,
    opts: &FitOptions<'_>,
) -> Result<SurrogatePolicy> {
    let k = anchors.len();
    if k == 0 {
        return Err(Error::Empty("anchor set"));
    }
    if opts.repeats.len() != k {
        return Err(Error::DimensionMismatch { expected: k, got: opts.repeats.len() });
    }
    if opts.repeats.contains(&0) {
        return Err(Error::Budget("every anchor needs at least one repeat".into()));
    }
    let spent: usize = opts.repeats.iter().sum();
    if spent != opts.budget {
        return Err(Error::Budget(format!("repeats sum to {spent}, stage budget is {}", opts.budget)));
    }
    opts.noise.validate()?;
    let estimates = anchors
        .points()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let obs = observe_condition(field, p, opts.repeats[i], &opts.noise, anchor_stream(opts.seed, i));
            Ok(AnchorEstimate { index: i, estimate: estimate(&obs, opts.estimator)?, repeats: opts.repeats[i], estimator: opts.estimator })
        })
        .collect::<Result<Vec<_>>>()?;
    SurrogatePolicy::from_estimates(space, anchors.clone(), estimates, opts.rule, field.coupling().to_vec(), field.drift().to_vec())
}

impl SurrogatePolicy {
    /// Assemble a policy from given anchor estimates. For the kernel rule,
    /// `L_hat` is measured on the dense grid of `space`.
    pub fn from_estimates(
        space: &ConditionSpace,
        anchors: AnchorSet,
        estimates: Vec<AnchorEstimate>,
        rule: AssignmentRule,
        coupling: Vec<f64>,
        drift: Vec<f64>,
    ) -> Result<Self> {
        if estimates.len() != anchors.len() {
            return Err(Error::DimensionMismatch { expected: anchors.len(), got: estimates.len() });
        }
        if estimates.iter().any(|e| e.estimate.iter().any(|x| !x.is_finite())) {
            return Err(invalid("anchor estimates must be finite"));
        }
        let m = drift.len();
        if coupling.len() != m * m || estimates.iter().any(|e| e.estimate.len() != m) {
            return Err(invalid("estimates and structure disagree on the state dimension"));
        }
        let index = AnchorIndex::build(space, &anchors)?;
        let bandwidth = match rule {
            AssignmentRule::NearestAnchor => None,
            AssignmentRule::Kernel { bandwidth: Some(b) } if b > 0.0 => Some(b),
            AssignmentRule::Kernel { bandwidth: Some(b) } => return Err(invalid(format!("kernel bandwidth must be > 0, got {b}"))),
            AssignmentRule::Kernel { bandwidth: None } => Some(space::fill_distance(&anchors, space)?.max(1e-12)),
        };
        let mut policy = Self { anchors, estimates, rule, bandwidth, coupling, drift, l_hat: None, index };
        if bandwidth.is_some() {
            policy.l_hat = Some(policy.measure_lipschitz(&space.grid()));
        }
        Ok(policy)
    }

    pub fn anchors(&self) -> &AnchorSet {
        &self.anchors
    }

    pub fn estimates(&self) -> &[AnchorEstimate] {
        &self.estimates
    }

    pub fn rule(&self) -> AssignmentRule {
        self.rule
    }

    pub fn bandwidth(&self) -> Option<f64> {
        self.bandwidth
    }

    /// Measured predictor Lipschitz constant (kernel rule only).
    pub fn l_hat(&self) -> Option<f64> {
        self.l_hat
    }

    pub fn coupling(&self) -> &[f64] {
        &self.coupling
    }

    pub fn drift(&self) -> &[f64] {
        &self.drift
    }

    pub fn nearest(&self, p: &[f64]) -> (usize, f64) {
        self.index.nearest(p)
    }

    /// Predicted condition part `ĝ(p)`.
    pub fn predict_condition(&self, p: &[f64]) -> Vec<f64> {
        match self.bandwidth {
            None => self.estimates[self.index.nearest(p).0].estimate.clone(),
            Some(h) => {
                if self.estimates.len() == 1 {
                    return self.estimates[0].estimate.clone();
                }
                let d2: Vec<f64> = self.anchors.points().iter().map(|a| dist2(a, p)).collect();
                let dmin = d2.iter().copied().fold(f64::INFINITY, f64::min);
                let scale = 1.0 / (2.0 * h * h);
                let w: Vec<f64> = d2.iter().map(|d| (-(d - dmin) * scale).exp()).collect();
                let total: f64 = w.iter().sum();
                let m = self.drift.len();
                let mut out = vec![0.0; m];
                for (wi, e) in w.iter().zip(&self.estimates) {
                    out.iter_mut().zip(&e.estimate).for_each(|(o, v)| *o += wi * v);
                }
                out.iter_mut().for_each(|o| *o /= total);
                out
            }
        }
    }

    /// `f̂(z, p, t)`.
    pub fn predict(&self, z: &[f64], p: &[f64], t: f64) -> Vec<f64> {
        ConditionalField::eval(self, z, p, t)
    }

    /// Max finite-difference ratio of `ĝ` between grid neighbours.
    pub fn measure_lipschitz(&self, grid: &EvalGrid) -> f64 {
        let res = grid.resolution();
        let d = grid.dim();
        if res < 2 {
            return 0.0;
        }
        let values: Vec<Vec<f64>> = grid.iter().map(|p| self.predict_condition(p)).collect();
        let mut worst: f64 = 0.0;
        let mut stride = 1;
        for _axis in 0..d {
            for i in 0..grid.len() {
                // skip points on the upper face of this axis
                if (i / stride) % res == res - 1 {
                    continue;
                }
                let j = i + stride;
                let dp = space::distance(grid.point(i), grid.point(j));
                let dv: Vec<f64> = values[i].iter().zip(&values[j]).map(|(a, b)| a - b).collect();
                worst = worst.max(norm(&dv) / dp);
            }
            stride *= res;
        }
        worst
    }

    /// Largest anchor-point error `max_i |ĝ_i - g(p_i)|`.
    pub fn max_anchor_error<F: SeparableField + ?Sized>(&self, field: &F) -> f64 {
        self.anchor_errors(field).into_iter().fold(0.0, f64::max)
    }

    pub fn anchor_errors<F: SeparableField + ?Sized>(&self, field: &F) -> Vec<f64> {
        self.anchors
            .points()
            .iter()
            .zip(&self.estimates)
            .map(|(p, e)| diff_norm(&e.estimate, &field.condition_part(p)))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

impl ConditionalField for SurrogatePolicy {
    fn state_dim(&self) -> usize {
        self.drift.len()
    }

    fn condition_dim(&self) -> usize {
        self.anchors.dim()
    }

    fn eval_into(&self, z: &[f64], p: &[f64], t: f64, out: &mut [f64]) {
        out.copy_from_slice(&self.predict_condition(p));
        add_structure(self.drift.len(), &self.coupling, &self.drift, z, t, out);
    }
}

/// A policy that predicts a condition part on top of known structure.
pub trait ConditionPredictor: ConditionalField {
    fn predict_condition(&self, p: &[f64]) -> Vec<f64>;
}

impl ConditionPredictor for SurrogatePolicy {
    fn predict_condition(&self, p: &[f64]) -> Vec<f64> {
        SurrogatePolicy::predict_condition(self, p)
    }
}

/// Sup over `grid` of `|f̂(0, p, 0) - f*(0, p, 0)|` and the condition where
/// it is attained. Under separability this is the sup over all `(z, t)`.
pub fn field_error_sup<P, F>(policy: &P, field: &F, grid: &EvalGrid) -> (f64, Vec<f64>)
where
    P: ConditionPredictor + ?Sized,
    F: SeparableField + ?Sized,
{
    let mut best = (f64::NEG_INFINITY, Vec::new());
    for p in grid.iter() {
        let e = diff_norm(&policy.predict_condition(p), &field.condition_part(p));
        if e > best.0 {
            best = (e, p.to_vec());
        }
    }
    best
}

/// Mean of the pointwise field error over `grid`.
pub fn field_error_mean<P, F>(policy: &P, field: &F, grid: &EvalGrid) -> f64
where
    P: ConditionPredictor + ?Sized,
    F: SeparableField + ?Sized,
{
    let total: f64 = grid.iter().map(|p| diff_norm(&policy.predict_condition(p), &field.condition_part(p))).sum();
    total / grid.len() as f64
}

pub(crate) fn diff_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Sum of a noise draw over `n` repeats divided by `n`, i.e. the error of a
/// sample mean of pure noise. Handy for Monte Carlo without a field.
pub fn noise_mean<R: Rng + ?Sized>(noise: &NoiseModel, n: usize, r: &mut R) -> f64 {
    (0..n).map(|_| noise.sample(r)).sum::<f64>() / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{sample_field, SyntheticField};
    use crate::rng::rng_from;
    use crate::space::{make_layout, nearest_anchor, LayoutKind};
    use crate::stats;

    fn world(seed: u64) -> (ConditionSpace, SyntheticField) {
        (ConditionSpace::unit(2).unwrap(), sample_field(seed, 2, 2, 4, 1.0, 0.5).unwrap())
    }

    fn fit(
        field: &SyntheticField,
        space: &ConditionSpace,
        anchors: &AnchorSet,
        n: usize,
        noise: NoiseModel,
        rule: AssignmentRule,
        seed: u64,
    ) -> SurrogatePolicy {
        let repeats = vec![n; anchors.len()];
        let opts = FitOptions {
            repeats: &repeats,
            budget: n * anchors.len(),
            noise,
            estimator: Estimator::SampleMean,
            rule,
            seed,
        };
        fit_surrogate(field, space, anchors, &opts).unwrap()
    }

    #[test]
    fn mean_examples() {
        assert_eq!(anchor_mean(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap(), vec![0.5, 0.5]);
        assert_eq!(anchor_mean(&[vec![0.3, -2.0]]).unwrap(), vec![0.3, -2.0]);
        assert!(anchor_mean(&[]).is_err());
    }

    #[test]
    fn sample_mean_error_matches_folded_normal() {
        let noise = NoiseModel::Gaussian { sigma: 1.0 };
        let mut r = rng_from(31);
        let errs: Vec<f64> = (0..10_000).map(|_| noise_mean(&noise, 100, &mut r).abs()).collect();
        let expected = (2.0 / std::f64::consts::PI).sqrt() / 10.0;
        let ratio = stats::mean(&errs) / expected;
        assert!((0.9..=1.1).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn median_of_means_examples() {
        let obs: Vec<Vec<f64>> = [0.0, 0.0, 0.0, 100.0, 0.0, 0.0].iter().map(|v| vec![*v]).collect();
        assert_eq!(median_of_means(&obs, 3).unwrap(), vec![0.0]);
        let obs: Vec<Vec<f64>> = (0..7).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        assert_eq!(median_of_means(&obs, 1).unwrap(), anchor_mean(&obs).unwrap());
        assert!(median_of_means(&obs, 8).is_err());
        assert!(median_of_means(&obs, 0).is_err());
        let same = vec![vec![1.25, -3.0]; 10];
        assert_eq!(median_of_means(&same, 4).unwrap(), vec![1.25, -3.0]);
    }

    #[test]
    fn median_of_means_beats_mean_under_heavy_tails() {
        let noise = NoiseModel::SymmetricPareto { alpha: 1.5, scale: 1.0 };
        let mut r = rng_from(5);
        let (mut mom, mut mean) = (0.0, 0.0);
        for _ in 0..1000 {
            let obs: Vec<Vec<f64>> = (0..300).map(|_| vec![noise.sample(&mut r)]).collect();
            mom += median_of_means(&obs, 9).unwrap()[0].abs();
            mean += anchor_mean(&obs).unwrap()[0].abs();
        }
        assert!(mom <= mean, "mom {mom} mean {mean}");
    }

    #[test]
    fn radius_examples() {
        let r = concentration_radius(1.0, 4, 1, 1, 0.5).unwrap();
        assert!((r - (2.0 * 4f64.ln() / 4.0).sqrt()).abs() < 1e-15);
        assert!((r - 0.83255).abs() < 1e-5);
        let r2 = concentration_radius(1.0, 8, 1, 1, 0.5).unwrap();
        assert!((r / r2 - 2f64.sqrt()).abs() < 1e-12);
        assert!(concentration_radius(1.0, 4, 1, 1, 1.0).is_err());
        assert!(concentration_radius(1.0, 4, 1, 1, 0.0).is_err());
    }

    #[test]
    fn concentration_coverage() {
        let noise = NoiseModel::Gaussian { sigma: 1.0 };
        let radius = concentration_radius(1.0, 16, 1, 8, 0.1).unwrap();
        let mut r = rng_from(8);
        let covered = (0..2000)
            .filter(|_| (0..8).all(|_| noise_mean(&noise, 16, &mut r).abs() <= radius))
            .count();
        assert!(covered as f64 / 2000.0 >= 0.9);
    }

    #[test]
    fn zero_noise_policy_is_exact_at_anchors() {
        let (space, field) = world(1);
        let anchors = make_layout(&space, LayoutKind::LowDiscrepancy, 7, 0).unwrap();
        let pol = fit(&field, &space, &anchors, 3, NoiseModel::none(), AssignmentRule::NearestAnchor, 4);
        for p in anchors.points() {
            for (z, t) in [([0.0, 0.0], 0.0), ([0.7, -1.2], 0.4)] {
                assert_eq!(pol.predict(&z, p, t), field.eval(&z, p, t));
            }
        }
        assert_eq!(pol.max_anchor_error(&field), 0.0);
    }

    #[test]
    fn many_repeats_converge() {
        let (space, field) = world(2);
        let anchors = make_layout(&space, LayoutKind::Grid, 4, 0).unwrap();
        let pol = fit(&field, &space, &anchors, 10_000, NoiseModel::Gaussian { sigma: 1.0 }, AssignmentRule::NearestAnchor, 3);
        assert!(pol.max_anchor_error(&field) <= 0.05);
    }

    #[test]
    fn identical_seeds_identical_policies() {
        let (space, field) = world(3);
        let anchors = make_layout(&space, LayoutKind::Grid, 9, 0).unwrap();
        let noise = NoiseModel::Gaussian { sigma: 0.3 };
        let a = fit(&field, &space, &anchors, 5, noise, AssignmentRule::NearestAnchor, 11);
        let b = fit(&field, &space, &anchors, 5, noise, AssignmentRule::NearestAnchor, 11);
        assert_eq!(a.estimates(), b.estimates());
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    }

    #[test]
    fn budget_mismatch_rejected() {
        let (space, field) = world(4);
        let anchors = make_layout(&space, LayoutKind::Grid, 4, 0).unwrap();
        let repeats = [2, 2, 2, 2];
        let opts = FitOptions {
            repeats: &repeats,
            budget: 9,
            noise: NoiseModel::none(),
            estimator: Estimator::SampleMean,
            rule: AssignmentRule::NearestAnchor,
            seed: 0,
        };
        assert!(matches!(fit_surrogate(&field, &space, &anchors, &opts), Err(Error::Budget(_))));
    }

    #[test]
    fn kernel_with_one_anchor_equals_nearest() {
        let (space, field) = world(5);
        let anchors = make_layout(&space, LayoutKind::Grid, 1, 0).unwrap();
        let noise = NoiseModel::Gaussian { sigma: 0.2 };
        let near = fit(&field, &space, &anchors, 4, noise, AssignmentRule::NearestAnchor, 1);
        let kern = fit(&field, &space, &anchors, 4, noise, AssignmentRule::Kernel { bandwidth: None }, 1);
        for p in space.grid().iter().step_by(101) {
            assert_eq!(near.predict(&[0.1, 0.2], p, 0.3), kern.predict(&[0.1, 0.2], p, 0.3));
        }
    }

    #[test]
    fn nearest_policy_is_constant_on_voronoi_cells() {
        let (space, field) = world(6);
        let anchors = make_layout(&space, LayoutKind::Random, 12, 9).unwrap();
        let pol = fit(&field, &space, &anchors, 2, NoiseModel::Gaussian { sigma: 0.5 }, AssignmentRule::NearestAnchor, 2);
        let grid = EvalGrid::regular(&space, 101);
        for p in grid.iter() {
            let label = nearest_anchor(p, &anchors).unwrap();
            assert_eq!(pol.predict_condition(p), pol.estimates()[label].estimate);
        }
    }

    #[test]
    fn sup_error_examples() {
        let (space, field) = world(7);
        let anchors = make_layout(&space, LayoutKind::Grid, 1, 0).unwrap();
        let pol = fit(&field, &space, &anchors, 1, NoiseModel::none(), AssignmentRule::NearestAnchor, 0);
        let (sup, _) = field_error_sup(&pol, &field, &space.grid());
        assert!(sup <= std::f64::consts::FRAC_1_SQRT_2);
        // exact policy: every anchor on the grid itself
        let grid = EvalGrid::regular(&space, 11);
        let pts: Vec<Vec<f64>> = grid.iter().map(|p| p.to_vec()).collect();
        let dense = AnchorSet::custom(&space, pts).unwrap();
        let exact = fit(&field, &space, &dense, 1, NoiseModel::none(), AssignmentRule::NearestAnchor, 0);
        assert_eq!(field_error_sup(&exact, &field, &grid).0, 0.0);
    }

    #[test]
    fn sup_error_stable_under_refinement() {
        let (space, field) = world(8);
        let anchors = make_layout(&space, LayoutKind::LowDiscrepancy, 10, 0).unwrap();
        let pol = fit(&field, &space, &anchors, 4, NoiseModel::Gaussian { sigma: 0.1 }, AssignmentRule::NearestAnchor, 5);
        let coarse = field_error_sup(&pol, &field, &EvalGrid::regular(&space, 201)).0;
        let fine = field_error_sup(&pol, &field, &EvalGrid::regular(&space, 801)).0;
        assert!((coarse - fine).abs() <= 0.02 * fine, "{coarse} vs {fine}");
    }

    #[test]
    fn decomposition_and_kernel_bounds_hold() {
        let space = ConditionSpace::unit(2).unwrap().with_resolution(101).unwrap();
        let grid = space.grid();
        for seed in 0..20u64 {
            let field = sample_field(seed, 2, 2, 4, 1.0, 0.0).unwrap();
            let anchors = make_layout(&space, LayoutKind::LowDiscrepancy, 5 + seed as usize % 20, 0).unwrap();
            let h = space::fill_distance(&anchors, &space).unwrap();
            let noise = NoiseModel::Gaussian { sigma: 0.2 };
            let near = fit(&field, &space, &anchors, 3, noise, AssignmentRule::NearestAnchor, seed);
            let bound = near.max_anchor_error(&field) + field.lipschitz_p() * h + 1e-12;
            assert!(field_error_sup(&near, &field, &grid).0 <= bound);
            let kern = fit(&field, &space, &anchors, 3, noise, AssignmentRule::Kernel { bandwidth: None }, seed);
            let l_hat = kern.l_hat().unwrap();
            let bound = kern.max_anchor_error(&field) + (field.lipschitz_p() + l_hat) * h + 1e-12;
            assert!(field_error_sup(&kern, &field, &grid).0 <= bound);
        }
    }

    #[test]
    fn estimation_rate_is_root_n() {
        let (space, field) = world(9);
        let anchors = make_layout(&space, LayoutKind::Grid, 4, 0).unwrap();
        let noise = NoiseModel::Gaussian { sigma: 1.0 };
        let ns = [4usize, 16, 64, 256];
        let errs: Vec<f64> = ns
            .iter()
            .map(|&n| {
                let e: Vec<f64> = (0..400u64)
                    .map(|s| fit(&field, &space, &anchors, n, noise, AssignmentRule::NearestAnchor, s).max_anchor_error(&field))
                    .collect();
                stats::mean(&e)
            })
            .collect();
        let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
        let fit = stats::log_log_fit(&xs, &errs);
        assert!((fit.slope + 0.5).abs() <= 0.1, "slope {}", fit.slope);
    }
}
