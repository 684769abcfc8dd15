use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::allocation::AllocationPlan;
use crate::error::{Error, Result};
use crate::estimation::{fit_surrogate, AssignmentRule, Estimator, FitOptions, SurrogatePolicy};
use crate::field::{NoiseModel, SeparableField};
use crate::rng;
use crate::space::{distance, AnchorIndex, AnchorSet, ConditionSpace, EvalGrid};

/// Run `f(0..n)` on a pool of `threads` workers (0 = all cores), keeping
/// results in index order.
pub(crate) fn par_trials<T, F>(threads: usize, n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| (0..n).into_par_iter().map(f).collect())
}

/// Seed of one runner sub-stream.
pub(crate) fn stream(seed: u64, runner: &str, parts: &[u64]) -> u64 {
    let mut path = vec![rng::label(runner)];
    path.extend_from_slice(parts);
    rng::derive_path(seed, &path)
}

/// Nearest-anchor cells of an evaluation grid.
pub(crate) struct Cells {
    pub labels: Vec<usize>,
    /// Fill distance measured on the grid.
    pub fill: f64,
}

impl Cells {
    pub fn new(space: &ConditionSpace, grid: &EvalGrid, anchors: &AnchorSet) -> Result<Self> {
        let index = AnchorIndex::build(space, anchors)?;
        let labels = index.assign(grid);
        let fill = grid.iter().zip(&labels).map(|(p, &i)| distance(p, anchors.point(i))).fold(0.0, f64::max);
        Ok(Self { labels, fill })
    }
}

pub(crate) fn truth<F: SeparableField + ?Sized>(field: &F, grid: &EvalGrid) -> Vec<Vec<f64>> {
    grid.iter().map(|p| field.condition_part(p)).collect()
}

fn gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Pointwise error of a nearest-anchor predictor on the grid.
pub(crate) fn grid_errors<'a>(estimates: &'a [Vec<f64>], cells: &'a Cells, truth: &'a [Vec<f64>]) -> impl Iterator<Item = f64> + 'a {
    cells.labels.iter().zip(truth).map(move |(&i, g)| gap(&estimates[i], g))
}

pub(crate) fn sup_error(estimates: &[Vec<f64>], cells: &Cells, truth: &[Vec<f64>]) -> f64 {
    grid_errors(estimates, cells, truth).fold(0.0, f64::max)
}

pub(crate) fn max_anchor_error<F: SeparableField + ?Sized>(estimates: &[Vec<f64>], field: &F, anchors: &AnchorSet) -> f64 {
    estimates.iter().zip(anchors.points()).map(|(e, p)| gap(e, &field.condition_part(p))).fold(0.0, f64::max)
}

/// Noiseless anchor values `g(p_i)`.
pub(crate) fn exact_estimates<F: SeparableField + ?Sized>(field: &F, anchors: &AnchorSet) -> Vec<Vec<f64>> {
    anchors.points().iter().map(|p| field.condition_part(p)).collect()
}

/// Uniform-allocation fit of `n` trajectories over the given anchors.
pub(crate) fn fit_uniform<F: SeparableField + ?Sized>(
    field: &F,
    space: &ConditionSpace,
    anchors: &AnchorSet,
    n: usize,
    noise: NoiseModel,
    estimator: Estimator,
    seed: u64,
) -> Result<SurrogatePolicy> {
    let plan = AllocationPlan::uniform(anchors.len(), n)?;
    let opts = FitOptions { repeats: &plan.repeats, budget: n, noise, estimator, rule: AssignmentRule::NearestAnchor, seed };
    fit_surrogate(field, space, anchors, &opts)
}

pub(crate) fn estimate_vectors(policy: &SurrogatePolicy) -> Vec<Vec<f64>> {
    policy.estimates().iter().map(|e| e.estimate.clone()).collect()
}

/// Monte Carlo `E max_{i<k} ||Z_i||` for `Z_i` standard normal in `m` dimensions.
pub fn expected_max_norm(k: usize, m: usize, samples: usize, seed: u64) -> f64 {
    let mut r = rng::rng_from(seed);
    let total: f64 = (0..samples)
        .map(|_| {
            (0..k)
                .map(|_| (0..m).map(|_| StandardNormal.sample(&mut r)).map(|x: f64| x * x).sum::<f64>().sqrt())
                .fold(0.0, f64::max)
        })
        .sum();
    total / samples as f64
}

/// Noise level at which the estimation term `κ σ sqrt(K_ref / N_ref)` equals
/// the measured noiseless error `b_ref` of the same layout.
pub fn calibrated_sigma(b_ref: f64, kappa: f64, k_ref: usize, n_ref: usize) -> f64 {
    b_ref / (kappa * (k_ref as f64 / n_ref as f64).sqrt())
}
