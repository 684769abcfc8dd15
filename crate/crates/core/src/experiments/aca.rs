//! Three-way comparison of fully diverse sampling, anchors only and the
//! two-stage pipeline, with the mining/residual ablation grid.

use super::common::{calibrated_sigma, exact_estimates, expected_max_norm, par_trials, stream, sup_error, truth, Cells};
use super::config::ExperimentConfig;
use super::output::RunnerOutput;
use super::ExperimentKind;
use crate::cells;
use crate::error::Result;
use crate::estimation::ConditionPredictor;
use crate::field::NoiseModel;
use crate::mining::teacher_forced_deviation;
use crate::pipeline::{run_mining, run_stage1, run_strategy, BudgetPlan, StageOptions, StrategyConfig, StrategyTag, World};
use crate::rng::label;
use crate::rollout::{rates_from_deviations, region_deviations};
use crate::space::{make_layout, ConditionSpace, RegionFamily};
use crate::stats;

struct Run {
    n: usize,
    strategy: StrategyTag,
    mining: bool,
    residual: bool,
    sup_error: f64,
    mean_error: f64,
    ledger: usize,
    devs: Vec<Vec<f64>>,
    frozen: bool,
}

struct WorldResult {
    sigma: f64,
    tau: f64,
    runs: Vec<Run>,
    spearman: f64,
}

impl WorldResult {
    fn rates(&self, run: &Run) -> Vec<f64> {
        rates_from_deviations(&run.devs, self.tau).iter().map(|r| r.rate).collect()
    }

    fn find(&self, n: usize, strategy: StrategyTag, mining: bool, residual: bool) -> &Run {
        self.runs
            .iter()
            .find(|r| r.n == n && r.strategy == strategy && r.mining == mining && r.residual == residual)
            .expect("run present")
    }

    fn mean_rate(&self, run: &Run) -> f64 {
        stats::mean(&self.rates(run))
    }
}

pub(crate) fn run_aca_compare(cfg: &ExperimentConfig) -> Result<RunnerOutput> {
    let c = &cfg.aca_compare;
    let name = "aca-compare";
    let worlds = cfg.trials_or(c.worlds);
    let wc = c.world.clone().unwrap_or_else(|| cfg.world.clone());
    let space = ConditionSpace::unit(c.d)?.with_resolution(c.resolution)?;
    let grid = space.grid();
    let regions = RegionFamily::standard(&space);
    let k_ref = (c.tau_budget / 4).max(1);
    let kappa = expected_max_norm(k_ref, wc.m, 20_000, stream(cfg.seed, name, &[label("kappa")]));

    let results = par_trials(cfg.threads, worlds, |w| {
        let w64 = w as u64;
        let field = wc.field(c.d, stream(cfg.seed, name, &[label("world"), w64]))?;
        let sigma = match c.sigma {
            Some(s) => s,
            None => {
                let a = make_layout(&space, c.diverse_layout, k_ref, 0)?;
                let b = sup_error(&exact_estimates(&field, &a), &Cells::new(&space, &grid, &a)?, &truth(&field, &grid));
                calibrated_sigma(b, kappa, k_ref, c.tau_budget)
            }
        };
        let world = World { space: space.clone(), field, noise: NoiseModel::Gaussian { sigma } };
        let eval_seed = stream(cfg.seed, name, &[label("eval"), w64]);
        let run_seed = stream(cfg.seed, name, &[label("run"), w64]);
        let mut runs = Vec::new();
        let mut cells_to_run: Vec<(usize, StrategyTag, bool, bool)> = Vec::new();
        for &n in &c.budgets {
            for s in StrategyTag::ALL {
                cells_to_run.push((n, s, true, true));
            }
        }
        for (mining, residual) in [(true, false), (false, true), (false, false)] {
            cells_to_run.push((c.ablation_budget, StrategyTag::Aca, mining, residual));
        }
        for (n, strategy, mining, residual) in cells_to_run {
            let stage = StageOptions { layout: c.layout, mining, residual, horizon: c.success.horizon, ..StageOptions::default() };
            let scfg = StrategyConfig { k_anchors: c.k_anchors, diverse_layout: c.diverse_layout, stage };
            let seed = crate::rng::derive(run_seed, n as u64);
            let o = run_strategy(&world, strategy, n, &scfg, &grid, seed)?;
            let frozen = grid
                .iter()
                .chain(o.policy.base.anchors().points().iter().map(|p| p.as_slice()))
                .filter(|p| !o.policy.residual.in_support(p))
                .all(|p| o.policy.predict_condition(p) == o.policy.base.predict_condition(p));
            let devs = region_deviations(&o.policy, &world.field, &regions, &c.success, eval_seed)?;
            runs.push(Run {
                n,
                strategy,
                mining,
                residual,
                sup_error: o.sup_error,
                mean_error: o.mean_error,
                ledger: o.ledger.total(),
                devs,
                frozen,
            });
        }
        let tau = match c.tau {
            Some(t) => t,
            None => {
                let d = runs.iter().find(|r| r.n == c.tau_budget && r.strategy == StrategyTag::FullyDiverse).expect("baseline run");
                let pooled: Vec<f64> = d.devs.iter().flatten().copied().collect();
                stats::median(&pooled)
            }
        };

        // noiseless demos: mining scores against true condition errors
        let plan = BudgetPlan::default_for(c.ablation_budget, c.k_anchors, &space)?;
        let stage = StageOptions { layout: c.layout, sigma_demo: Some(0.0), horizon: c.success.horizon, ..StageOptions::default() };
        let (base, _) = run_stage1(&world, &plan, &stage, crate::rng::derive(run_seed, label("spearman")))?;
        let mined = run_mining(&base, &world, &plan, &stage, crate::rng::derive(run_seed, label("spearman-mining")))?;
        let truth_err: Vec<f64> = mined
            .report
            .candidates
            .iter()
            .map(|q| {
                let g = world.field.condition_part(q);
                base.predict_condition(q).iter().zip(&g).map(|(a, b)| (a - b).abs()).sum()
            })
            .collect();
        let rescored = mined.demos.iter().map(|d| teacher_forced_deviation(&base, d)).collect::<Result<Vec<_>>>()?;
        debug_assert_eq!(rescored, mined.report.scores);
        let spearman = stats::spearman(&mined.report.scores, &truth_err);
        Ok(WorldResult { sigma, tau, runs, spearman })
    })?;

    let mut out = RunnerOutput::new(
        ExperimentKind::AcaCompare,
        &["world", "n", "strategy", "mining", "residual", "sigma", "tau", "sup_error", "mean_error", "s1", "s2", "s3", "mean_rate", "ledger"],
    );
    let (mut ledger_ok, mut frozen_ok) = (true, true);
    for (w, res) in results.iter().enumerate() {
        for run in &res.runs {
            let rates = res.rates(run);
            ledger_ok &= run.ledger == run.n;
            frozen_ok &= run.frozen;
            let cell = |i: usize| rates.get(i).copied().unwrap_or(f64::NAN);
            out.table.push(cells![
                w,
                run.n,
                run.strategy,
                run.mining,
                run.residual,
                res.sigma,
                res.tau,
                run.sup_error,
                run.mean_error,
                cell(0),
                cell(1),
                cell(2),
                stats::mean(&rates),
                run.ledger
            ]);
        }
    }
    for &n in &c.budgets {
        for s in StrategyTag::ALL {
            let rates: Vec<f64> = results.iter().map(|r| r.mean_rate(r.find(n, s, true, true))).collect();
            out.aggregate(format!("mean_rate_{s}_n{n}"), &rates);
            let sup: Vec<f64> = results.iter().map(|r| r.find(n, s, true, true).sup_error).collect();
            out.aggregate(format!("sup_error_{s}_n{n}"), &sup);
        }
    }
    let nb = c.ablation_budget;
    let best = results
        .iter()
        .filter(|r| {
            let full = r.mean_rate(r.find(nb, StrategyTag::Aca, true, true));
            [(true, false), (false, true), (false, false)].iter().all(|&(m, s)| full >= r.mean_rate(r.find(nb, StrategyTag::Aca, m, s)))
        })
        .count();
    let (lo, hi) = c.efficiency_budgets;
    let efficient = results
        .iter()
        .filter(|r| r.mean_rate(r.find(lo, StrategyTag::Aca, true, true)) >= r.mean_rate(r.find(hi, StrategyTag::FullyDiverse, true, true)))
        .count();
    let outer = results
        .iter()
        .filter(|r| {
            let a = r.rates(r.find(nb, StrategyTag::Aca, true, true));
            let b = r.rates(r.find(nb, StrategyTag::AnchorsOnly, true, true));
            a.last() >= b.last()
        })
        .count();
    let spearman_one = results.iter().filter(|r| (r.spearman - 1.0).abs() < 1e-12).count();
    let frac = |k: usize| k as f64 / worlds as f64;
    out.metric("ablation_best_fraction", frac(best));
    out.metric("efficiency_fraction", frac(efficient));
    out.metric("outer_region_fraction", frac(outer));
    out.metric("spearman_one_fraction", frac(spearman_one));
    out.aggregate("tau", &results.iter().map(|r| r.tau).collect::<Vec<_>>());
    out.aggregate("sigma", &results.iter().map(|r| r.sigma).collect::<Vec<_>>());
    out.aggregate("spearman", &results.iter().map(|r| r.spearman).collect::<Vec<_>>());
    out.check("ledger", ledger_ok, true, "every run spent exactly its budget");
    out.check("frozen_core", frozen_ok, true, "composite equals base outside the residual support in every run");
    out.check("spearman", spearman_one == worlds, false, format!("{spearman_one}/{worlds} worlds rank probes exactly by true error"));
    out.check(
        "ablation_best",
        frac(best) >= c.ablation_fraction_min,
        false,
        format!("mining + residual has the best mean rate in {best}/{worlds} worlds"),
    );
    out.check(
        "sample_efficiency",
        frac(efficient) >= c.efficiency_fraction_min,
        false,
        format!("aca at N = {lo} matches fully diverse at N = {hi} in {efficient}/{worlds} worlds"),
    );
    out.check(
        "outer_region",
        frac(outer) >= c.region_fraction_min,
        false,
        format!("aca outer-region rate >= anchors only at N = {nb} in {outer}/{worlds} worlds"),
    );
    Ok(out)
}
