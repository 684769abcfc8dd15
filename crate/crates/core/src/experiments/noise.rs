//! Estimation-noise runners: simultaneous coverage of the anchor bound and
//! sample-mean rates under heavy tails.

use super::common::{fit_uniform, max_anchor_error, estimate_vectors, par_trials, stream};
use super::config::ExperimentConfig;
use super::output::RunnerOutput;
use super::ExperimentKind;
use crate::cells;
use crate::error::Result;
use crate::estimation::{anchor_mean, concentration_radius, median_of_means, noise_mean, Estimator};
use crate::field::NoiseModel;
use crate::rng::{label, rng_from};
use crate::space::{make_layout, ConditionSpace, LayoutKind};
use crate::stats::{self, log_log_fit, Summary};

pub(crate) fn run_concentration(cfg: &ExperimentConfig) -> Result<RunnerOutput> {
    let c = &cfg.concentration;
    let name = "concentration";
    let trials = cfg.trials_or(c.trials);
    let m = cfg.world.m;
    let space = ConditionSpace::unit(c.d)?;
    let anchors = make_layout(&space, LayoutKind::LowDiscrepancy, c.k, 0)?;
    let field = cfg.world.field(c.d, stream(cfg.seed, name, &[label("world")]))?;
    let noise = NoiseModel::Gaussian { sigma: c.sigma };
    let worst = par_trials(cfg.threads, trials, |t| {
        let seed = stream(cfg.seed, name, &[label("trial"), t as u64]);
        let policy = fit_uniform(&field, &space, &anchors, c.k * c.n, noise, Estimator::SampleMean, seed)?;
        Ok(max_anchor_error(&estimate_vectors(&policy), &field, &anchors))
    })?;

    let mut deltas: Vec<f64> = c.deltas.iter().chain(&c.scan).copied().collect();
    deltas.sort_by(|a, b| b.total_cmp(a));
    deltas.dedup();
    let mut out = RunnerOutput::new(
        ExperimentKind::Concentration,
        &["delta", "k", "n", "sigma", "radius", "trials", "covered", "coverage", "half_width"],
    );
    let mut coverages = Vec::with_capacity(deltas.len());
    for &delta in &deltas {
        let radius = concentration_radius(c.sigma, c.n, m, c.k, delta)?;
        let covered = worst.iter().filter(|&&e| e <= radius).count();
        let p = covered as f64 / trials as f64;
        let hw = 1.96 * (p * (1.0 - p) / trials as f64).sqrt();
        out.table.push(cells![delta, c.k, c.n, c.sigma, radius, trials, covered, p, hw]);
        out.metric(format!("coverage_delta_{delta}"), p);
        coverages.push((delta, p));
    }
    out.aggregate("max_anchor_error", &worst);
    for &delta in &c.deltas {
        let p = coverages.iter().find(|x| x.0 == delta).map_or(f64::NAN, |x| x.1);
        out.check(format!("coverage_delta_{delta}"), p >= 1.0 - delta, false, format!("coverage {p:.4} vs 1 - delta = {}", 1.0 - delta));
    }
    let monotone = coverages.windows(2).all(|w| w[1].1 >= w[0].1);
    out.check("coverage_monotone", monotone, false, "coverage non-decreasing as delta shrinks");
    let r1 = concentration_radius(c.sigma, c.n, m, c.k, 0.05)?;
    let r4 = concentration_radius(c.sigma, 4 * c.n, m, c.k, 0.05)?;
    out.check("radius_quarter_rule", (r4 / r1 - 0.5).abs() <= 1e-12, true, format!("radius ratio at 4n: {}", r4 / r1));
    Ok(out)
}

fn tail_noise(q: f64, scale: f64) -> NoiseModel {
    if q >= 2.0 {
        NoiseModel::Gaussian { sigma: scale }
    } else {
        NoiseModel::SymmetricPareto { alpha: q, scale }
    }
}

pub(crate) fn run_heavy_tail(cfg: &ExperimentConfig) -> Result<RunnerOutput> {
    let c = &cfg.heavy_tail;
    let name = "heavy-tail";
    let trials = cfg.trials_or(c.trials);
    let mut out = RunnerOutput::new(
        ExperimentKind::HeavyTail,
        &["case", "q", "n", "estimator", "trials", "median_abs_error", "mean_abs_error", "half_width"],
    );
    for (qi, &q) in c.qs.iter().enumerate() {
        let noise = tail_noise(q, c.scale);
        let mut medians = Vec::with_capacity(c.ns.len());
        for &n in &c.ns {
            let errs = par_trials(cfg.threads, trials, |t| {
                let mut r = rng_from(stream(cfg.seed, name, &[label("rate"), qi as u64, n as u64, t as u64]));
                Ok(noise_mean(&noise, n, &mut r).abs())
            })?;
            let s = Summary::of(&errs);
            let med = stats::median(&errs);
            out.table.push(cells!["rate", q, n, "sample_mean", trials, med, s.mean, s.half_width]);
            medians.push(med);
        }
        let ns: Vec<f64> = c.ns.iter().map(|&n| n as f64).collect();
        let fit = log_log_fit(&ns, &medians);
        let predicted = -(1.0 - 1.0 / q);
        out.metric(format!("slope_q{q}"), fit.slope);
        out.metric(format!("slope_q{q}_half_width"), fit.slope_half_width);
        out.check(
            format!("slope_q{q}"),
            (fit.slope - predicted).abs() <= c.slope_tolerance,
            false,
            format!("fitted {:.3} ± {:.3} vs predicted {predicted:.3}", fit.slope, fit.slope_half_width),
        );
    }

    // paired comparison on identical samples
    let noise = tail_noise(c.mom_alpha, c.scale);
    let trials = cfg.trials_or(c.mom_trials);
    let pairs = par_trials(cfg.threads, trials, |t| {
        let mut r = rng_from(stream(cfg.seed, name, &[label("robust"), t as u64]));
        let obs: Vec<Vec<f64>> = (0..c.mom_n).map(|_| vec![noise.sample(&mut r)]).collect();
        Ok((anchor_mean(&obs)?[0].abs(), median_of_means(&obs, c.mom_blocks)?[0].abs()))
    })?;
    let mean_errs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let mom_errs: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    for (label_, errs) in [("sample_mean", &mean_errs), ("median_of_means", &mom_errs)] {
        let s = Summary::of(errs);
        out.table.push(cells!["robust", c.mom_alpha, c.mom_n, label_, trials, stats::median(errs), s.mean, s.half_width]);
    }
    let diffs: Vec<f64> = pairs.iter().map(|p| p.0 - p.1).collect();
    out.aggregate("mean_minus_mom_abs_error", &diffs);
    let (a, b) = (stats::mean(&mean_errs), stats::mean(&mom_errs));
    out.metric("robust_mean_abs_error", a);
    out.metric("robust_mom_abs_error", b);
    out.check("mom_improves", b < a, false, format!("median-of-means {b:.4} vs sample mean {a:.4} at alpha = {}", c.mom_alpha));
    Ok(out)
}
