//! Anchor layouts at a fixed budget against the single-shot baseline.

use super::common::{calibrated_sigma, estimate_vectors, exact_estimates, expected_max_norm, fit_uniform, par_trials, stream, sup_error, truth, Cells};
use super::config::ExperimentConfig;
use super::output::RunnerOutput;
use super::ExperimentKind;
use crate::cells;
use crate::error::Result;
use crate::estimation::Estimator;
use crate::field::NoiseModel;
use crate::rng::label;
use crate::space::{make_layout, ConditionSpace, LayoutKind};
use crate::stats::{self, Summary};

pub(crate) fn run_layouts(cfg: &ExperimentConfig) -> Result<RunnerOutput> {
    let c = &cfg.layouts;
    let name = "layouts";
    let worlds = cfg.trials_or(c.worlds);
    let space = ConditionSpace::unit(c.d)?.with_resolution(c.resolution)?;
    let grid = space.grid();
    let k_ref = ((c.n as f64 * c.k_ref_fraction).round() as usize).clamp(1, c.n);
    let kappa = expected_max_norm(k_ref, cfg.world.m, c.kappa_samples, stream(cfg.seed, name, &[label("kappa")]));

    // per world: sigma, diverse error, then (fill, error) per layout
    let results = par_trials(cfg.threads, worlds, |w| {
        let w64 = w as u64;
        let field = cfg.world.field(c.d, stream(cfg.seed, name, &[label("world"), w64]))?;
        let truth = truth(&field, &grid);
        let layout_seed = stream(cfg.seed, name, &[label("layout"), w64]);
        let ref_anchors = make_layout(&space, c.diverse_layout, k_ref, layout_seed)?;
        let b_ref = sup_error(&exact_estimates(&field, &ref_anchors), &Cells::new(&space, &grid, &ref_anchors)?, &truth);
        let sigma = c.sigma.unwrap_or_else(|| calibrated_sigma(b_ref, kappa, k_ref, c.n));
        let noise = NoiseModel::Gaussian { sigma };
        let mean_error = |kind: LayoutKind, k: usize, tag: u64| -> Result<(f64, f64)> {
            let anchors = make_layout(&space, kind, k, layout_seed)?;
            let cells = Cells::new(&space, &grid, &anchors)?;
            let mut total = 0.0;
            for r in 0..c.draws {
                let seed = stream(cfg.seed, name, &[label("draw"), w64, tag, r as u64]);
                let policy = fit_uniform(&field, &space, &anchors, c.n, noise, Estimator::SampleMean, seed)?;
                total += sup_error(&estimate_vectors(&policy), &cells, &truth);
            }
            Ok((cells.fill, total / c.draws as f64))
        };
        let diverse = mean_error(c.diverse_layout, c.n, u64::MAX)?;
        let per_layout = c
            .layouts
            .iter()
            .enumerate()
            .map(|(li, &kind)| mean_error(kind, c.k, li as u64))
            .collect::<Result<Vec<_>>>()?;
        Ok((sigma, diverse, per_layout))
    })?;

    let mut out = RunnerOutput::new(
        ExperimentKind::Layouts,
        &["world", "strategy", "layout", "k", "n", "sigma", "fill_distance", "mean_sup_error"],
    );
    for (w, (sigma, diverse, per_layout)) in results.iter().enumerate() {
        out.table.push(cells![w, "fully_diverse", c.diverse_layout, c.n, c.n, sigma, diverse.0, diverse.1]);
        for (&kind, &(fill, err)) in c.layouts.iter().zip(per_layout) {
            out.table.push(cells![w, "anchors_only", kind, c.k, c.n, sigma, fill, err]);
        }
    }
    let diverse: Vec<f64> = results.iter().map(|r| r.1 .1).collect();
    out.aggregate("fully_diverse", &diverse);
    let diverse_mean = stats::mean(&diverse);
    let mut stats_by = Vec::new();
    let mut losers = Vec::new();
    for (li, &kind) in c.layouts.iter().enumerate() {
        let errs: Vec<f64> = results.iter().map(|r| r.2[li].1).collect();
        let fills: Vec<f64> = results.iter().map(|r| r.2[li].0).collect();
        let s = Summary::of(&errs);
        out.aggregates.insert(kind.tag().to_string(), s);
        out.metric(format!("fill_{kind}"), stats::mean(&fills));
        if s.mean >= diverse_mean {
            losers.push(kind.tag());
        }
        stats_by.push((kind, s, stats::mean(&fills)));
    }
    out.check(
        "all_layouts_beat_diverse",
        losers.is_empty(),
        false,
        if losers.is_empty() { "every layout beats the single-shot baseline".to_string() } else { format!("not better than baseline: {}", losers.join(", ")) },
    );
    let find = |k: LayoutKind| stats_by.iter().find(|s| s.0 == k);
    if let Some(tl) = find(LayoutKind::TopLeft) {
        let centers: Vec<_> = [LayoutKind::CenterRect, LayoutKind::CenterCircle].iter().filter_map(|&k| find(k)).collect();
        let ok = !centers.is_empty() && centers.iter().all(|s| s.2 < tl.2);
        out.check("center_fill_below_top_left", ok, false, format!("top_left fill {:.4}", tl.2));
    }
    if let (Some(rect), Some(circle)) = (find(LayoutKind::CenterRect), find(LayoutKind::CenterCircle)) {
        let diff = (rect.1.mean - circle.1.mean).abs();
        let spread = 0.5 * (rect.1.std_dev + circle.1.std_dev);
        out.metric("rect_circle_difference", diff);
        out.metric("rect_circle_seed_std", spread);
        out.check("rect_circle_marginal", diff < spread, false, format!("|rect - circle| = {diff:.4} vs between-seed sd {spread:.4}"));
    }
    Ok(out)
}
