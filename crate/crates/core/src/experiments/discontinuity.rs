//! Average versus worst-case risk when the field jumps on a small set.

use super::common::{estimate_vectors, exact_estimates, fit_uniform, grid_errors, max_anchor_error, par_trials, stream, truth, Cells};
use super::config::{DiscontinuityConfig, ExperimentConfig};
use super::output::RunnerOutput;
use super::ExperimentKind;
use crate::cells;
use crate::error::Result;
use crate::estimation::Estimator;
use crate::field::{make_piecewise, SeparableField};
use crate::rng::label;
use crate::space::{make_layout, AnchorSet, ConditionSpace, EvalGrid};

struct Cell {
    anchors_used: usize,
    mean_risk: f64,
    sup_risk: f64,
    bound: f64,
    slack: f64,
    worst_inside: bool,
}

/// Risks of one fit. `inside` flags grid points of the exceptional set.
fn evaluate<F: SeparableField>(
    field: &F,
    space: &ConditionSpace,
    grid: &EvalGrid,
    anchors: &AnchorSet,
    inside: &[bool],
    epsilon: f64,
    c: &DiscontinuityConfig,
    seed: u64,
) -> Result<Cell> {
    let n = anchors.len() * c.repeats;
    let est = if c.noise.is_noiseless() {
        exact_estimates(field, anchors)
    } else {
        estimate_vectors(&fit_uniform(field, space, anchors, n, c.noise, Estimator::SampleMean, seed)?)
    };
    let cells = Cells::new(space, grid, anchors)?;
    let truth = truth(field, grid);
    let errs: Vec<f64> = grid_errors(&est, &cells, &truth).collect();
    let (mut sup, mut arg) = (0.0, 0);
    for (i, &e) in errs.iter().enumerate() {
        if e > sup {
            sup = e;
            arg = i;
        }
    }
    let mean = errs.iter().sum::<f64>() / errs.len() as f64;
    let anchor_err = max_anchor_error(&est, field, anchors);
    let grid_fraction = inside.iter().filter(|&&b| b).count() as f64 / inside.len() as f64;
    let bound = anchor_err + field.lipschitz_p() * cells.fill + epsilon * c.jump;
    // the grid over-samples the box when its edge falls between nodes
    let slack = c.jump * (grid_fraction - epsilon).max(0.0);
    Ok(Cell { anchors_used: anchors.len(), mean_risk: mean, sup_risk: sup, bound, slack, worst_inside: inside[arg] })
}

pub(crate) fn run_discontinuity(cfg: &ExperimentConfig) -> Result<RunnerOutput> {
    let c = &cfg.discontinuity;
    let name = "discontinuity";
    let worlds = cfg.trials_or(c.worlds);
    let space = ConditionSpace::unit(c.d)?.with_resolution(c.resolution)?;
    let grid = space.grid();
    let corner = vec![true; c.d];
    let results = par_trials(cfg.threads, worlds, |w| {
        let w64 = w as u64;
        let base = cfg.world.field(c.d, stream(cfg.seed, name, &[label("world"), w64]))?;
        let layout = make_layout(&space, c.layout, c.k, stream(cfg.seed, name, &[label("layout"), w64]))?;
        c.epsilons
            .iter()
            .enumerate()
            .map(|(ei, &eps)| {
                let seed = stream(cfg.seed, name, &[label("fit"), w64, ei as u64]);
                if eps == 0.0 {
                    let inside = vec![false; grid.len()];
                    return evaluate(&base, &space, &grid, &layout, &inside, 0.0, c, seed);
                }
                let field = make_piecewise(&base, &space, eps, c.jump, &corner)?;
                // anchors inside the exceptional set would carry the jump into the smooth part
                let kept: Vec<Vec<f64>> = layout.points().iter().filter(|p| !field.in_exceptional(p)).cloned().collect();
                let anchors = AnchorSet::new(&space, kept, layout.layout())?;
                let inside: Vec<bool> = grid.iter().map(|p| field.in_exceptional(p)).collect();
                evaluate(&field, &space, &grid, &anchors, &inside, eps, c, seed)
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let mut out = RunnerOutput::new(
        ExperimentKind::Discontinuity,
        &["world", "epsilon", "anchors", "mean_risk", "sup_risk", "bound", "grid_slack", "average_held", "sup_exceeds_bound", "worst_inside"],
    );
    let (mut held_all, mut smooth_ok) = (true, true);
    let (mut inside_cases, mut inside_exceed) = (0, 0);
    for (w, row) in results.iter().enumerate() {
        for (cell, &eps) in row.iter().zip(&c.epsilons) {
            let held = cell.mean_risk <= cell.bound + cell.slack + 1e-12;
            let exceeds = cell.sup_risk > cell.bound;
            held_all &= held;
            if eps == 0.0 {
                smooth_ok &= cell.mean_risk <= cell.sup_risk && cell.sup_risk <= cell.bound + 1e-12;
            } else if cell.worst_inside {
                inside_cases += 1;
                inside_exceed += exceeds as usize;
            }
            out.table.push(cells![w, eps, cell.anchors_used, cell.mean_risk, cell.sup_risk, cell.bound, cell.slack, held, exceeds, cell.worst_inside]);
        }
    }
    for (ei, &eps) in c.epsilons.iter().enumerate() {
        out.aggregate(format!("mean_risk_eps{eps}"), &results.iter().map(|r| r[ei].mean_risk).collect::<Vec<_>>());
        out.aggregate(format!("sup_risk_eps{eps}"), &results.iter().map(|r| r[ei].sup_risk).collect::<Vec<_>>());
        out.aggregate(format!("bound_eps{eps}"), &results.iter().map(|r| r[ei].bound).collect::<Vec<_>>());
    }
    out.check("average_bound", held_all, true, "average risk <= max anchor error + L h + eps M (+ grid slack) in every cell");
    if c.epsilons.contains(&0.0) {
        out.check("smooth_limit", smooth_ok, true, "at eps = 0 the bound is the smooth decomposition bound");
    }
    let frac = if inside_cases > 0 { inside_exceed as f64 / inside_cases as f64 } else { f64::NAN };
    out.metric("worst_inside_cases", inside_cases as f64);
    out.metric("sup_exceeds_fraction", frac);
    out.check(
        "sup_exceeds_when_worst_inside",
        inside_cases > 0 && inside_exceed == inside_cases,
        false,
        format!("{inside_exceed}/{inside_cases} cells with the worst query inside the jump set exceed the average bound"),
    );
    Ok(out)
}
