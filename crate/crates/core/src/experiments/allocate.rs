//! Closed-form allocation plans and a Monte Carlo check of proportional
//! repeats against uniform ones.

use rand::Rng;

use super::common::{par_trials, stream};
use super::config::ExperimentConfig;
use super::output::RunnerOutput;
use super::ExperimentKind;
use crate::allocation::{bound_terms, error_bound, optimal_k, proportional_allocation, smallest_interior_n, AllocationPlan, BoundParams};
use crate::cells;
use crate::error::Result;
use crate::estimation::noise_mean;
use crate::field::NoiseModel;
use crate::rng::{label, rng_from};

/// `E max_i |mean_i|` with anchor `i` drawing `repeats[i]` samples of
/// `N(0, σ_i²)`. Anchor streams depend only on `(vector, trial, i)`, so two
/// plans share their sample prefixes.
fn worst_anchor_error(sigmas: &[f64], repeats: &[usize], trials: usize, seed: u64) -> f64 {
    let mut total = 0.0;
    for t in 0..trials {
        let mut worst: f64 = 0.0;
        for (i, (&s, &n)) in sigmas.iter().zip(repeats).enumerate() {
            let mut r = rng_from(crate::rng::derive_path(seed, &[t as u64, i as u64]));
            worst = worst.max(noise_mean(&NoiseModel::Gaussian { sigma: s }, n, &mut r).abs());
        }
        total += worst;
    }
    total / trials as f64
}

pub(crate) fn run_allocate(cfg: &ExperimentConfig) -> Result<RunnerOutput> {
    let c = &cfg.allocate;
    let name = "allocate";
    let params = BoundParams { c_est: c.c_est, sigma: c.sigma, lipschitz: c.lipschitz, c_fill: c.c_fill, d: c.d };
    let mut out = RunnerOutput::new(
        ExperimentKind::Allocate,
        &["vector", "k", "n", "sigma_min", "sigma_max", "uniform_worst", "proportional_worst", "improved", "equalization_gap"],
    );

    for &n in &c.ns {
        let k = optimal_k(n, &params)?;
        let bound = error_bound(k.integer, n, &params)?;
        let terms = bound_terms(k.integer as f64, n as f64, &params);
        out.notes.push(format!(
            "N = {n}: K* = {:.4} (integer {}), bound {:.6} = coverage {:.6} + density {:.6}",
            k.continuous, k.integer, bound, terms.coverage, terms.density
        ));
    }
    match smallest_interior_n(&params, 1_000_000) {
        Some(n) => out.notes.push(format!("smallest N with an interior optimum: {n}")),
        None => out.notes.push("no interior optimum below N = 1e6".to_string()),
    }
    let plan = proportional_allocation(&c.sigmas, c.plan_n, c.c_est)?;
    out.notes.push(format!(
        "proportional plan for sigmas {:?} at N = {}: repeats {:?}, worst-anchor bound {:.6}",
        c.sigmas, c.plan_n, plan.plan.repeats, plan.worst_bound
    ));

    let vectors = cfg.trials_or(c.vectors);
    let (lo, hi) = (c.sigma_range.0.ln(), c.sigma_range.1.ln());
    let rows = par_trials(cfg.threads, vectors, |v| {
        let v64 = v as u64;
        let mut r = rng_from(stream(cfg.seed, name, &[label("sigmas"), v64]));
        let sigmas: Vec<f64> = (0..c.mc_k).map(|_| r.random_range(lo..=hi).exp()).collect();
        let prop = proportional_allocation(&sigmas, c.mc_n, c.c_est)?;
        let uni = AllocationPlan::uniform(c.mc_k, c.mc_n)?;
        let ratios: Vec<f64> = sigmas.iter().zip(&prop.real).map(|(s, n)| s / n.sqrt()).collect();
        let gap = ratios.iter().map(|x| (x - ratios[0]).abs()).fold(0.0, f64::max);
        let seed = stream(cfg.seed, name, &[label("mc"), v64]);
        let u = worst_anchor_error(&sigmas, &uni.repeats, c.mc_trials, seed);
        let p = worst_anchor_error(&sigmas, &prop.plan.repeats, c.mc_trials, seed);
        let smin = sigmas.iter().copied().fold(f64::INFINITY, f64::min);
        let smax = sigmas.iter().copied().fold(0.0, f64::max);
        Ok((smin, smax, u, p, gap))
    })?;
    let mut improved = 0;
    let mut max_gap: f64 = 0.0;
    for (v, &(smin, smax, u, p, gap)) in rows.iter().enumerate() {
        let better = p <= u;
        improved += better as usize;
        max_gap = max_gap.max(gap);
        out.table.push(cells![v, c.mc_k, c.mc_n, smin, smax, u, p, better, gap]);
    }
    out.aggregate("uniform_worst", &rows.iter().map(|r| r.2).collect::<Vec<_>>());
    out.aggregate("proportional_worst", &rows.iter().map(|r| r.3).collect::<Vec<_>>());
    let frac = improved as f64 / vectors as f64;
    out.metric("improved_fraction", frac);
    out.metric("max_equalization_gap", max_gap);
    out.check(
        "proportional_not_worse",
        frac >= c.fraction_min,
        false,
        format!("{improved}/{vectors} vectors: proportional worst-anchor error <= uniform"),
    );
    out.check("equalization", max_gap <= 1e-9, true, format!("max |σ_i/sqrt(n_i) - σ_1/sqrt(n_1)| before rounding = {max_gap:e}"));
    Ok(out)
}
