//! Closed forms re-derived by hand and compared against the library.

use aca_core::allocation::{
    bound_terms, error_bound, fully_diverse_bound, heavy_tail_mean_bound, optimal_error, optimal_k, proportional_allocation,
    BoundParams,
};
use aca_core::estimation::{concentration_radius, AnchorEstimate, AssignmentRule, Estimator, SurrogatePolicy};
use aca_core::field::sample_field;
use aca_core::mining::{make_probe, teacher_forced_deviation};
use aca_core::pipeline::BudgetPlan;
use aca_core::rollout::{gronwall_bound, integrate};
use aca_core::space::{AnchorSet, ConditionSpace};
use approx::assert_relative_eq;

fn params(sigma: f64, lipschitz: f64, c_fill: f64, d: usize) -> BoundParams {
    BoundParams { c_est: 1.3, sigma, lipschitz, c_fill, d }
}

#[test]
fn optimal_k_matches_hand_formula() {
    for d in 1..=3 {
        for &(sigma, l, c) in &[(1.0, 1.0, 1.0), (0.3, 2.0, 0.7), (2.5, 0.4, 1.1)] {
            let p = params(sigma, l, c, d);
            for n in [50usize, 100, 1000] {
                let expected = (2.0 * l * c * (n as f64).sqrt() / (d as f64 * p.c_est * sigma)).powf(2.0 * d as f64 / (d as f64 + 2.0));
                assert_relative_eq!(optimal_k(n, &p).unwrap().continuous, expected, max_relative = 1e-12);
            }
        }
    }
}

#[test]
fn bound_is_stationary_at_the_optimum() {
    for d in 1..=3 {
        let p = params(0.5, 1.5, 1.0, d);
        let n = 400.0;
        let k = optimal_k(400, &p).unwrap().continuous;
        let h = 1e-4 * k;
        let slope = (bound_terms(k + h, n, &p).total() - bound_terms(k - h, n, &p).total()) / (2.0 * h);
        assert!(slope.abs() < 1e-7, "d = {d}: derivative {slope}");
        // density term equals 2/d times the coverage term there
        let t = bound_terms(k, n, &p);
        assert_relative_eq!(t.density, 2.0 / d as f64 * t.coverage, max_relative = 1e-10);
    }
}

#[test]
fn optimum_grows_like_power_of_n() {
    for d in 1..=3 {
        let p = params(1.0, 1.0, 1.0, d);
        let k1 = optimal_k(1000, &p).unwrap().continuous;
        let k2 = optimal_k(16000, &p).unwrap().continuous;
        assert_relative_eq!((k2 / k1).ln() / 16f64.ln(), d as f64 / (d as f64 + 2.0), epsilon = 1e-12);
        assert!(k2 < 16000.0);
        let e1 = optimal_error(1000, &p).unwrap();
        let e2 = optimal_error(16000, &p).unwrap();
        assert_relative_eq!((e2 / e1).ln() / 16f64.ln(), -1.0 / (d as f64 + 2.0), epsilon = 1e-12);
    }
}

#[test]
fn unit_bound_at_one_hundred() {
    let p = BoundParams::unit(2);
    assert_eq!(optimal_k(100, &p).unwrap().integer, 10);
    assert_relative_eq!(error_bound(10, 100, &p).unwrap(), 0.632455532, epsilon = 1e-9);
    assert_relative_eq!(error_bound(1, 100, &p).unwrap(), 1.1, epsilon = 1e-12);
    assert_relative_eq!(fully_diverse_bound(100, &p), 1.1, epsilon = 1e-12);
    assert!(error_bound(101, 100, &p).is_err());
}

#[test]
fn gronwall_values() {
    assert_relative_eq!(gronwall_bound(1.0, 1.0, 0.5), 0.859140914, epsilon = 1e-9);
    assert_relative_eq!(gronwall_bound(0.0, 2.0, 0.3), 0.6, epsilon = 1e-15);
    // both sides of the series switch track exp_m1
    for lambda in [0.999e-6, 1.001e-6, 1e-3] {
        let expected: f64 = f64::exp_m1(lambda) / lambda;
        assert_relative_eq!(gronwall_bound(lambda, 1.0, 1.0), expected, max_relative = 1e-9);
    }
    assert_relative_eq!(gronwall_bound(2.0, 0.5, 1.0), (1f64.exp() - 1.0) / 2.0, epsilon = 1e-14);
}

#[test]
fn linear_flow_endpoint() {
    struct Grow;
    impl aca_core::field::ConditionalField for Grow {
        fn state_dim(&self) -> usize {
            1
        }
        fn condition_dim(&self) -> usize {
            1
        }
        fn eval_into(&self, z: &[f64], _p: &[f64], _t: f64, out: &mut [f64]) {
            out[0] = z[0];
        }
    }
    let traj = integrate(&Grow, &[1.0], &[0.0], 1.0, 100).unwrap();
    assert_relative_eq!(traj.endpoint()[0], std::f64::consts::E, epsilon = 1e-6);
}

#[test]
fn concentration_radius_formula() {
    let r = concentration_radius(0.7, 16, 3, 8, 0.05).unwrap();
    let expected = 0.7 * (2.0 * 3.0 * (2.0 * 3.0 * 8.0 / 0.05f64).ln() / 16.0).sqrt();
    assert_relative_eq!(r, expected, max_relative = 1e-14);
    let r4 = concentration_radius(0.7, 64, 3, 8, 0.05).unwrap();
    assert_relative_eq!(r4 / r, 0.5, epsilon = 1e-14);
    assert!(concentration_radius(0.7, 16, 3, 8, 1.0).is_err());
}

#[test]
fn heavy_tail_bound_rate() {
    assert_relative_eq!(heavy_tail_mean_bound(2.0, 1.0, 100).unwrap(), 0.141421356, epsilon = 1e-9);
    for q in [1.25, 1.5, 2.0] {
        let a = heavy_tail_mean_bound(q, 1.0, 10).unwrap();
        let b = heavy_tail_mean_bound(q, 1.0, 10_000).unwrap();
        assert_relative_eq!((b / a).log10() / 3.0, -(1.0 - 1.0 / q), epsilon = 1e-12);
    }
    assert!(heavy_tail_mean_bound(1.0, 1.0, 10).is_err());
}

#[test]
fn proportional_plan_equalizes() {
    let plan = proportional_allocation(&[1.0, 1.0, 2f64.sqrt()], 100, 1.0).unwrap();
    assert_eq!(plan.plan.repeats, vec![25, 25, 50]);
    assert_relative_eq!(plan.worst_bound, 0.2, epsilon = 1e-12);

    let sigmas = [0.3, 1.7, 0.9, 2.2];
    let n = 1000;
    let plan = proportional_allocation(&sigmas, n, 1.0).unwrap();
    let total: f64 = sigmas.iter().map(|s| s * s).sum();
    for (s, r) in sigmas.iter().zip(&plan.real) {
        assert_relative_eq!(*r, n as f64 * s * s / total, max_relative = 1e-12);
        assert_relative_eq!(s / r.sqrt(), (total / n as f64).sqrt(), max_relative = 1e-12);
    }
    assert_eq!(plan.plan.repeats.iter().sum::<usize>(), n);
}

#[test]
fn default_split_and_mined_counts() {
    let space = ConditionSpace::unit(2).unwrap();
    for (n, na, np, nb, k) in [(50, 40, 5, 5, 2), (100, 80, 10, 10, 3), (150, 120, 15, 15, 5)] {
        let plan = BudgetPlan::default_for(n, 6, &space).unwrap();
        assert_eq!((plan.n_anchor, plan.n_probe, plan.n_boundary, plan.k_mined), (na, np, nb, k), "N = {n}");
    }
}

#[test]
fn noiseless_deviation_is_l1_condition_gap() {
    let space = ConditionSpace::unit(2).unwrap();
    let field = sample_field(7, 2, 3, 4, 1.0, 0.5).unwrap();
    let anchors = AnchorSet::custom(&space, vec![vec![0.5, 0.5]]).unwrap();
    let est = AnchorEstimate { index: 0, estimate: vec![0.1, -0.2, 0.3], repeats: 1, estimator: Estimator::SampleMean };
    let policy = SurrogatePolicy::from_estimates(
        &space,
        anchors,
        vec![est],
        AssignmentRule::NearestAnchor,
        field.coupling().to_vec(),
        field.drift().to_vec(),
    )
    .unwrap();
    for p in [[0.1, 0.9], [0.5, 0.5], [0.8, 0.2]] {
        let demo = make_probe(&field, &p, &[0.3, -0.1, 0.2], 1.0, 16, 0.0, 1).unwrap();
        let g = field.condition_part(&p);
        let gap: f64 = g.iter().zip([0.1, -0.2, 0.3]).map(|(a, b)| (a - b).abs()).sum();
        assert_relative_eq!(teacher_forced_deviation(&policy, &demo).unwrap(), gap, epsilon = 1e-12);
    }
}
