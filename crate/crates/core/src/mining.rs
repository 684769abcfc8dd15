//! Boundary mining: probe demonstrations, teacher-forced deviation scores,
//! top-k selection and local expansion around the selected conditions.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::field::ConditionalField;
use crate::rng;
use crate::rollout::integrate;
use crate::space::{halton, AnchorSet, ConditionSpace};

/// One simulated teleoperated demonstration at condition `p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeDemo {
    pub p: Vec<f64>,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// `a_t = f*(z_t, p, t)` plus optional demo noise, one per state.
    pub actions: Vec<Vec<f64>>,
}

impl ProbeDemo {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Roll out the true field and record noisy actions along the path.
pub fn make_probe(
    field: &(impl ConditionalField + ?Sized),
    p: &[f64],
    z0: &[f64],
    horizon: f64,
    steps: usize,
    sigma_demo: f64,
    seed: u64,
) -> Result<ProbeDemo> {
    if !(sigma_demo >= 0.0) {
        return Err(invalid("demo noise must be >= 0"));
    }
    let traj = integrate(field, z0, p, horizon, steps)?;
    let mut r = rng::rng_from(seed);
    let normal = Normal::new(0.0, sigma_demo.max(f64::MIN_POSITIVE)).expect("finite sigma");
    let actions = traj
        .states
        .iter()
        .zip(&traj.times)
        .map(|(z, &t)| {
            let mut a = field.eval(z, p, t);
            if sigma_demo > 0.0 {
                a.iter_mut().for_each(|x| *x += normal.sample(&mut r));
            }
            a
        })
        .collect();
    Ok(ProbeDemo { p: p.to_vec(), times: traj.times, states: traj.states, actions })
}

/// `(1/T) Σ_t |â_t - a_t|_1` with `â_t` decoded on the demonstration states.
pub fn teacher_forced_deviation(policy: &(impl ConditionalField + ?Sized), demo: &ProbeDemo) -> Result<f64> {
    if demo.is_empty() {
        return Err(Error::Empty("probe demo"));
    }
    let m = policy.state_dim();
    if demo.states[0].len() != m || demo.actions[0].len() != m {
        return Err(Error::DimensionMismatch { expected: m, got: demo.states[0].len() });
    }
    if demo.p.len() != policy.condition_dim() {
        return Err(Error::DimensionMismatch { expected: policy.condition_dim(), got: demo.p.len() });
    }
    let mut pred = vec![0.0; m];
    let total: f64 = demo
        .states
        .iter()
        .zip(&demo.times)
        .zip(&demo.actions)
        .map(|((z, &t), a)| {
            policy.eval_into(z, &demo.p, t, &mut pred);
            pred.iter().zip(a).map(|(x, y)| (x - y).abs()).sum::<f64>()
        })
        .sum();
    Ok(total / demo.len() as f64)
}

/// Indices of the `k` largest scores, highest first; ties go to the lower
/// candidate index.
pub fn select_boundary(scores: &[f64], k: usize) -> Result<Vec<usize>> {
    if k > scores.len() {
        return Err(invalid(format!("k = {k} exceeds {} candidates", scores.len())));
    }
    Ok(ranking(scores).into_iter().take(k).collect())
}

/// All candidate indices ordered by descending score.
pub fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// Uniform draws in the ℓ∞ ball of `radius` around `center`, clipped to the
/// domain.
pub fn expand_local(center: &[f64], radius: f64, count: usize, space: &ConditionSpace, seed: u64) -> Result<Vec<Vec<f64>>> {
    if !(radius > 0.0) {
        return Err(invalid("expansion radius must be > 0"));
    }
    if count == 0 {
        return Err(invalid("expansion count must be >= 1"));
    }
    if center.len() != space.dim() {
        return Err(Error::DimensionMismatch { expected: space.dim(), got: center.len() });
    }
    let mut r = rng::rng_from(seed);
    Ok((0..count)
        .map(|_| {
            let mut q: Vec<f64> = center.iter().map(|c| c + r.random_range(-radius..=radius)).collect();
            space.clamp(&mut q);
            q
        })
        .collect())
}

/// `count` Halton conditions over the domain, skipping any that coincide
/// with an anchor.
pub fn probe_candidates(space: &ConditionSpace, count: usize, anchors: &AnchorSet) -> Vec<Vec<f64>> {
    let d = space.dim();
    (1u64..)
        .map(|i| space.from_unit(&halton(i, d)))
        .filter(|q| anchors.points().iter().all(|a| a != q))
        .take(count)
        .collect()
}

/// Scores, ranking and the selected boundary set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationReport {
    pub candidates: Vec<Vec<f64>>,
    pub scores: Vec<f64>,
    pub ranking: Vec<usize>,
    pub selected: Vec<usize>,
    pub k: usize,
}

impl DeviationReport {
    pub fn new(candidates: Vec<Vec<f64>>, scores: Vec<f64>, k: usize) -> Result<Self> {
        if candidates.len() != scores.len() {
            return Err(Error::DimensionMismatch { expected: candidates.len(), got: scores.len() });
        }
        if scores.iter().any(|s| !(*s >= 0.0)) {
            return Err(invalid("deviation scores must be non-negative"));
        }
        let selected = select_boundary(&scores, k)?;
        Ok(Self { ranking: ranking(&scores), candidates, scores, selected, k })
    }

    pub fn is_selected(&self, i: usize) -> bool {
        self.selected.contains(&i)
    }

    pub fn selected_points(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.selected.iter().map(|&i| &self.candidates[i])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::{fit_surrogate, AssignmentRule, Estimator, FitOptions, SurrogatePolicy};
    use crate::field::{sample_field, NoiseModel, SyntheticField};
    use crate::rng::rng_from;
    use crate::space::{distance, make_layout, LayoutKind};
    use crate::stats;
    use proptest::prelude::*;
    use rand::Rng;

    fn world(seed: u64, k: usize, sigma: f64) -> (ConditionSpace, SyntheticField, SurrogatePolicy) {
        let space = ConditionSpace::unit(2).unwrap().with_resolution(41).unwrap();
        let field = sample_field(seed, 2, 2, 4, 1.0, 0.6).unwrap();
        let anchors = make_layout(&space, LayoutKind::CenterRect, k, 0).unwrap();
        let repeats = vec![4; k];
        let opts = FitOptions {
            repeats: &repeats,
            budget: 4 * k,
            noise: NoiseModel::Gaussian { sigma },
            estimator: Estimator::SampleMean,
            rule: AssignmentRule::NearestAnchor,
            seed,
        };
        let pol = fit_surrogate(&field, &space, &anchors, &opts).unwrap();
        (space, field, pol)
    }

    #[test]
    fn noiseless_probe_actions_equal_field() {
        let (_, field, _) = world(1, 6, 0.1);
        let demo = make_probe(&field, &[0.2, 0.9], &[0.1, -0.3], 1.0, 16, 0.0, 5).unwrap();
        for ((z, &t), a) in demo.states.iter().zip(&demo.times).zip(&demo.actions) {
            assert_eq!(a, &field.eval(z, &[0.2, 0.9], t));
        }
        let replay = integrate(&field, &[0.1, -0.3], &[0.2, 0.9], 1.0, 16).unwrap();
        for (a, b) in replay.states.iter().zip(&demo.states) {
            assert!(crate::estimation::diff_norm(a, b) <= 1e-9);
        }
    }

    #[test]
    fn zero_field_probe() {
        let field = SyntheticField::new(2, 2, vec![], vec![0.0; 4], vec![0.0; 2]).unwrap();
        let demo = make_probe(&field, &[0.5, 0.5], &[0.4, 0.6], 1.0, 8, 0.0, 0).unwrap();
        assert!(demo.states.iter().all(|z| z == &vec![0.4, 0.6]));
        assert!(demo.actions.iter().all(|a| a == &vec![0.0, 0.0]));
    }

    #[test]
    fn deviation_examples() {
        let (_, field, pol) = world(2, 6, 0.0);
        let demo = make_probe(&field, pol.anchors().point(0), &[0.0, 0.0], 1.0, 10, 0.0, 0).unwrap();
        assert_eq!(teacher_forced_deviation(&pol, &demo).unwrap(), 0.0);

        struct Shifted<'a>(&'a SyntheticField);
        impl ConditionalField for Shifted<'_> {
            fn state_dim(&self) -> usize {
                2
            }
            fn condition_dim(&self) -> usize {
                2
            }
            fn eval_into(&self, z: &[f64], p: &[f64], t: f64, out: &mut [f64]) {
                self.0.eval_into(z, p, t, out);
                out[0] += 0.1;
                out[1] -= 0.2;
            }
        }
        let demo = make_probe(&field, &[0.3, 0.4], &[0.2, 0.1], 1.0, 10, 0.0, 0).unwrap();
        let e = teacher_forced_deviation(&Shifted(&field), &demo).unwrap();
        assert!((e - 0.3).abs() < 1e-12);
    }

    #[test]
    fn deviation_equals_condition_gap() {
        let (space, field, pol) = world(3, 6, 0.4);
        for q in probe_candidates(&space, 30, pol.anchors()) {
            let demo = make_probe(&field, &q, &[0.3, -0.2], 1.0, 12, 0.0, 0).unwrap();
            let e = teacher_forced_deviation(&pol, &demo).unwrap();
            let gap: f64 = pol.predict_condition(&q).iter().zip(field.condition_part(&q)).map(|(a, b)| (a - b).abs()).sum();
            assert!((e - gap).abs() <= 1e-12 * gap.max(1.0), "{e} vs {gap}");
        }
    }

    #[test]
    fn selection_examples() {
        assert_eq!(select_boundary(&[0.1, 0.9, 0.9, 0.2], 2).unwrap(), vec![1, 2]);
        assert_eq!(select_boundary(&[0.3, 0.1, 0.2], 3).unwrap().len(), 3);
        assert!(select_boundary(&[0.3], 2).is_err());
    }

    #[test]
    fn selection_matches_sort_and_take() {
        let mut r = rng_from(10);
        for _ in 0..1000 {
            let n = r.random_range(1..30usize);
            // coarse values force ties
            let scores: Vec<f64> = (0..n).map(|_| (r.random_range(0..10) as f64) / 10.0).collect();
            let k = r.random_range(0..=n);
            let mut pairs: Vec<(f64, usize)> = scores.iter().copied().zip(0..).collect();
            pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
            let expected: Vec<usize> = pairs.iter().take(k).map(|p| p.1).collect();
            assert_eq!(select_boundary(&scores, k).unwrap(), expected);
        }
    }

    #[test]
    fn expansion_examples() {
        let space = ConditionSpace::unit(2).unwrap();
        let tiny = expand_local(&[0.4, 0.6], 1e-12, 50, &space, 1).unwrap();
        assert!(tiny.iter().all(|q| distance(q, &[0.4, 0.6]) <= 2e-12));
        let corner = expand_local(&[1.0, 0.0], 0.1, 500, &space, 2).unwrap();
        assert!(corner.iter().all(|q| space.contains(q)));
        let many = expand_local(&[0.5, 0.5], 0.05, 10_000, &space, 3).unwrap();
        let worst = many.iter().flat_map(|q| q.iter().map(|x| (x - 0.5).abs())).fold(0.0, f64::max);
        assert!(worst <= 0.05);
        assert_eq!(expand_local(&[0.5, 0.5], 0.05, 10, &space, 3).unwrap(), expand_local(&[0.5, 0.5], 0.05, 10, &space, 3).unwrap());
        assert!(expand_local(&[0.5, 0.5], 0.0, 10, &space, 3).is_err());
    }

    #[test]
    fn candidates_avoid_anchors() {
        let space = ConditionSpace::unit(2).unwrap();
        let anchors = AnchorSet::custom(&space, vec![space.from_unit(&halton(1, 2)), vec![0.1, 0.1]]).unwrap();
        let c = probe_candidates(&space, 10, &anchors);
        assert_eq!(c.len(), 10);
        assert!(c.iter().all(|q| !anchors.points().contains(q)));
    }

    #[test]
    fn spearman_is_one_without_demo_noise() {
        let (space, field, pol) = world(4, 6, 0.3);
        let cands = probe_candidates(&space, 25, pol.anchors());
        let (mut e, mut truth) = (Vec::new(), Vec::new());
        for q in &cands {
            let demo = make_probe(&field, q, &[0.0, 0.0], 1.0, 10, 0.0, 0).unwrap();
            e.push(teacher_forced_deviation(&pol, &demo).unwrap());
            truth.push(pol.predict_condition(q).iter().zip(field.condition_part(q)).map(|(a, b)| (a - b).abs()).sum::<f64>());
        }
        assert!((stats::spearman(&e, &truth) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mining_targets_coverage_gaps() {
        let mut wins = 0;
        for seed in 0..100u64 {
            let (space, field, pol) = world(seed, 6, 0.01);
            let cands = probe_candidates(&space, 20, pol.anchors());
            let scores: Vec<f64> = cands
                .iter()
                .map(|q| {
                    let demo = make_probe(&field, q, &[0.0, 0.0], 1.0, 8, 0.0, 0).unwrap();
                    teacher_forced_deviation(&pol, &demo).unwrap()
                })
                .collect();
            let report = DeviationReport::new(cands.clone(), scores, 3).unwrap();
            let dist: Vec<f64> = cands.iter().map(|q| pol.nearest(q).1).collect();
            let sel: Vec<f64> = report.selected.iter().map(|&i| dist[i]).collect();
            let rest: Vec<f64> = (0..cands.len()).filter(|i| !report.is_selected(*i)).map(|i| dist[i]).collect();
            if stats::mean(&sel) > stats::mean(&rest) {
                wins += 1;
            }
        }
        assert!(wins >= 90, "{wins}/100");
    }

    proptest! {
        #[test]
        fn expansion_stays_inside(cx in 0.0f64..1.0, cy in 0.0f64..1.0, radius in 1e-6f64..0.5, seed in 0u64..1000) {
            let space = ConditionSpace::unit(2).unwrap();
            for q in expand_local(&[cx, cy], radius, 20, &space, seed).unwrap() {
                prop_assert!(space.contains(&q));
            }
        }
    }
}
