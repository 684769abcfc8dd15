//! Certification suite: endpoint deviation against the Grönwall bound, and
//! the coverage/estimation decomposition of the sup field error.

use rand::Rng;
use rand_distr::StandardNormal;

use super::common::{fit_uniform, par_trials, stream};
use super::config::ExperimentConfig;
use super::output::RunnerOutput;
use super::ExperimentKind;
use crate::cells;
use crate::error::Result;
use crate::estimation::{diff_norm, field_error_sup, Estimator};
use crate::field::{sample_field_with, NoiseModel};
use crate::rng::{label, rng_from};
use crate::rollout::{gronwall_bound, trajectory_deviation};
use crate::space::{make_layout, ConditionSpace, LayoutKind};

pub(crate) fn run_gronwall_audit(cfg: &ExperimentConfig) -> Result<RunnerOutput> {
    let c = &cfg.gronwall_audit;
    let name = "gronwall-audit";
    let space = ConditionSpace::unit(c.d)?.with_resolution(c.resolution)?;
    let grid = space.grid();
    let m = cfg.world.m;

    // random world, anchor set and noisy fit
    let draw_policy = |r: &mut crate::rng::SimRng, world_seed: u64, fit_seed: u64| -> Result<_> {
        let mut spec = cfg.world.spec(c.d);
        spec.lipschitz_z = r.random_range(0.0..2.0);
        spec.lipschitz_p = r.random_range(0.2..2.0);
        let field = sample_field_with(world_seed, &spec)?;
        let k = r.random_range(1..=c.max_k);
        let kind = if r.random::<bool>() { LayoutKind::LowDiscrepancy } else { LayoutKind::Random };
        let anchors = make_layout(&space, kind, k, fit_seed)?;
        let n = k * r.random_range(1..=5usize);
        let noise = NoiseModel::Gaussian { sigma: r.random_range(0.0..=c.max_sigma) };
        let policy = fit_uniform(&field, &space, &anchors, n, noise, Estimator::SampleMean, fit_seed)?;
        Ok((field, policy))
    };

    let rollouts = cfg.trials_or(c.rollouts);
    let gron = par_trials(cfg.threads, rollouts, |i| {
        let i64_ = i as u64;
        let mut r = rng_from(stream(cfg.seed, name, &[label("rollout"), i64_]));
        let (field, policy) = draw_policy(
            &mut r,
            stream(cfg.seed, name, &[label("rollout-world"), i64_]),
            stream(cfg.seed, name, &[label("rollout-fit"), i64_]),
        )?;
        let p = space.sample_uniform(&mut r);
        let z0: Vec<f64> = (0..m).map(|_| r.sample(StandardNormal)).collect();
        let dev = trajectory_deviation(&policy, &field, &z0, &p, c.horizon, c.steps)?;
        let delta = diff_norm(&policy.predict_condition(&p), &field.condition_part(&p));
        Ok((dev, gronwall_bound(field.lipschitz_z(), c.horizon, delta)))
    })?;

    let worlds = c.decomposition_worlds;
    let decomp = par_trials(cfg.threads, worlds, |w| {
        let w64 = w as u64;
        let mut r = rng_from(stream(cfg.seed, name, &[label("decomposition"), w64]));
        let (field, policy) = draw_policy(
            &mut r,
            stream(cfg.seed, name, &[label("decomposition-world"), w64]),
            stream(cfg.seed, name, &[label("decomposition-fit"), w64]),
        )?;
        let (sup, _) = field_error_sup(&policy, &field, &grid);
        let fill = grid.iter().map(|p| policy.nearest(p).1).fold(0.0, f64::max);
        Ok((sup, policy.max_anchor_error(&field) + field.lipschitz_p() * fill))
    })?;

    let mut out = RunnerOutput::new(ExperimentKind::GronwallAudit, &["check", "trial", "observed", "bound", "held"]);
    let mut violations = 0;
    for (i, &(dev, bound)) in gron.iter().enumerate() {
        let held = dev <= bound + c.slack;
        violations += (!held) as usize;
        out.table.push(cells!["gronwall", i, dev, bound, held]);
    }
    let mut failures = 0;
    for (w, &(sup, bound)) in decomp.iter().enumerate() {
        let held = sup <= bound + 1e-12;
        failures += (!held) as usize;
        out.table.push(cells!["decomposition", w, sup, bound, held]);
    }
    let ratios: Vec<f64> = gron.iter().filter(|x| x.1 > 0.0).map(|x| x.0 / x.1).collect();
    out.aggregate("gronwall_tightness", &ratios);
    out.aggregate("decomposition_tightness", &decomp.iter().filter(|x| x.1 > 0.0).map(|x| x.0 / x.1).collect::<Vec<_>>());
    out.metric("gronwall_violations", violations as f64);
    out.metric("decomposition_failures", failures as f64);
    out.check("gronwall", violations == 0, true, format!("{violations}/{rollouts} rollouts exceed the endpoint bound by more than {:e}", c.slack));
    out.check("decomposition", failures == 0, true, format!("{failures}/{worlds} worlds break sup error <= max anchor error + L h"));
    Ok(out)
}
