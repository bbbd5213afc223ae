use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rsc_core::hard_instance::{build_rsc_mdp, build_standard_mdp, verify_theorem2, START};
use rsc_core::mdp::{random_mdp, random_simplex, StochasticPolicy};
use rsc_core::oracle::{lp_oracle_min_expectation, two_action_oracle, vertex_oracle_min_expectation};
use rsc_core::robust::{robust_value_iteration_rmdp, tv_worst_case_expectation, TvBall};
use rsc_core::scmdp::{
    marginalize, random_spec, robust_sc_policy_value, robust_sc_value_iteration, sc_policy_value,
};

#[test]
fn greedy_matches_grid_on_two_points() {
    // brute force over a 10^4-point grid on the 1-simplex
    let (p0, v, sigma) = ([0.5, 0.5], [0.0, 1.0], 0.2);
    let mut best = f64::INFINITY;
    for i in 0..=10_000 {
        let x = i as f64 / 10_000.0;
        let p = [x, 1.0 - x];
        if 0.5 * ((p[0] - p0[0]).abs() + (p[1] - p0[1]).abs()) <= sigma + 1e-12 {
            best = best.min(p[0] * v[0] + p[1] * v[1]);
        }
    }
    let wc = tv_worst_case_expectation(&p0, &v, sigma).unwrap();
    assert!((wc.value - best).abs() < 1e-12);
    assert!((wc.value - 0.3).abs() < 1e-12);
}

#[test]
fn greedy_matches_lp_oracle_on_random_triples() {
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    for _ in 0..1000 {
        let n = rng.random_range(1..8);
        let p0 = random_simplex(n, &mut rng);
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let sigma = rng.random::<f64>();
        let greedy = tv_worst_case_expectation(&p0, &v, sigma).unwrap().value;
        let lp = lp_oracle_min_expectation(&TvBall::new(p0.clone(), sigma).unwrap(), &v)
            .unwrap()
            .value;
        assert!((greedy - lp).abs() < 1e-6, "greedy {greedy} lp {lp}");
    }
}

#[test]
fn lp_oracle_edge_cases() {
    let ball = TvBall::new(vec![0.1, 0.2, 0.7], 1.0).unwrap();
    let v = [3.0, -1.0, 2.0];
    assert!((lp_oracle_min_expectation(&ball, &v).unwrap().value + 1.0).abs() < 1e-9);
    let ball = TvBall::new(vec![0.1, 0.2, 0.7], 0.4).unwrap();
    assert!((lp_oracle_min_expectation(&ball, &[2.5; 3]).unwrap().value - 2.5).abs() < 1e-9);
    assert!(TvBall::new(vec![0.5, 0.6], 0.1).is_err());
    assert!(TvBall::new(vec![0.5, 0.5], 1.1).is_err());
}

#[test]
fn robust_bellman_residual() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let mdp = random_mdp(5, 3, 4, &mut rng);
        let sigma = rng.random::<f64>();
        let report = robust_value_iteration_rmdp(&mdp, sigma).unwrap();
        for t in 1..=4 {
            for s in 0..5 {
                let mut best = f64::NEG_INFINITY;
                for a in 0..3 {
                    let ball = TvBall::new(mdp.transition(t, s, a).to_vec(), sigma).unwrap();
                    let backup = mdp.reward(t, s, a)
                        + lp_oracle_min_expectation(&ball, report.values.values_at(t + 1))
                            .unwrap()
                            .value;
                    assert!((report.values.q_value(t, s, a) - backup).abs() <= 1e-10);
                    best = best.max(backup);
                }
                assert!((report.values.value(t, s) - best).abs() <= 1e-10);
            }
        }
    }
}

#[test]
fn rmdp_hard_instance_prefers_staying() {
    for sigma1 in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let report = robust_value_iteration_rmdp(&build_standard_mdp(10).unwrap(), sigma1).unwrap();
        for s in 0..4 {
            assert_eq!(report.action(1, s), 0, "sigma1 {sigma1} state {s}");
        }
    }
    let report = robust_value_iteration_rmdp(&build_standard_mdp(10).unwrap(), 0.5).unwrap();
    let closed: f64 = (2..=10).map(|k| 0.5f64.powi(k - 2)).sum();
    assert!((report.values.value(2, START) - closed).abs() < 1e-12);
    assert!((report.values.value(2, START) - 1.99609375).abs() < 1e-12);
}

#[test]
fn rmdp_closed_form_values() {
    for &sigma1 in &[0.1, 0.3, 0.9] {
        let t_max = 6;
        let report = robust_value_iteration_rmdp(&build_standard_mdp(t_max).unwrap(), sigma1).unwrap();
        for t in 1..=t_max {
            let closed: f64 = (t..=t_max).map(|k| (1.0 - sigma1).powi((k - t) as i32)).sum();
            assert!((report.values.value(t, START) - closed).abs() < 1e-12);
        }
    }
}

#[test]
fn hard_instance_marginal_is_exact() {
    for horizon in [2, 5, 10] {
        let spec = build_rsc_mdp(horizon).unwrap();
        assert_eq!(marginalize(&spec).unwrap(), build_standard_mdp(horizon).unwrap());
    }
}

#[test]
fn hard_instance_sc_values() {
    let spec = build_rsc_mdp(10).unwrap();
    let stay = StochasticPolicy::deterministic(&vec![vec![0; 4]; 10], 2).unwrap();
    assert!((sc_policy_value(&spec, &stay).unwrap().value(1, START) - 10.0).abs() < 1e-12);
    assert!((robust_sc_policy_value(&spec, &stay, 1.0).unwrap().value(1, START) - 1.0).abs() < 1e-12);
    let mut half = stay.clone();
    half.set_row(1, START, vec![0.5, 0.5]).unwrap();
    assert!((robust_sc_policy_value(&spec, &half, 1.0).unwrap().value(1, START) - 5.5).abs() < 1e-12);

    let report = robust_sc_value_iteration(&spec, 1.0).unwrap();
    assert!((report.values.value(1, START) - 5.5).abs() < 1e-9);
    assert!((report.policy.prob(1, START, 0) - 0.5).abs() < 1e-9);
}

#[test]
fn theorem2_closed_forms() {
    for horizon in [2usize, 3, 5, 10, 20] {
        for sigma2 in [0.55, 0.6, 0.75, 0.9, 1.0] {
            let report = verify_theorem2(horizon, 0.3, sigma2).unwrap();
            let tm1 = (horizon - 1) as f64;
            assert!((report.v_rsc_star - (1.0 + tm1 / 2.0)).abs() < 1e-9);
            assert!((report.v_rmdp_policy - (1.0 + tm1 * (1.0 - sigma2))).abs() < 1e-9);
            assert!((report.gap - tm1 * (sigma2 - 0.5)).abs() < 1e-9);
            assert!(report.v_rsc_star >= report.v_rmdp_policy);
        }
    }
    let r = verify_theorem2(10, 0.3, 1.0).unwrap();
    assert!(r.holds && (r.gap - 4.5).abs() < 1e-9 && (r.bound - 1.25).abs() < 1e-15);
    let r = verify_theorem2(10, 1.0, 0.75).unwrap();
    assert!(r.holds && (r.gap - 2.25).abs() < 1e-9);
    let r = verify_theorem2(2, 0.3, 1.0).unwrap();
    assert!(r.holds && (r.v_rsc_star - 1.5).abs() < 1e-9 && (r.gap - 0.5).abs() < 1e-9);
}

#[test]
fn double_oracle_matches_two_action_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    for _ in 0..200 {
        let ns = rng.random_range(2..5);
        let nc = rng.random_range(2..4);
        let horizon = rng.random_range(1..4);
        let spec = random_spec(ns, 2, nc, horizon, &mut rng);
        let sigma = rng.random::<f64>();
        let report = robust_sc_value_iteration(&spec, sigma).unwrap();
        let exact = two_action_oracle(&spec, sigma);
        for (x, y) in report.values.v.iter().flatten().zip(exact.iter().flatten()) {
            assert!((x - y).abs() <= 1e-9, "double oracle {x} vs exact {y}");
        }
    }
}

#[test]
fn no_random_policy_beats_robust_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..5 {
        let ns = rng.random_range(2..5);
        let na = rng.random_range(2..4);
        let nc = rng.random_range(2..4);
        let horizon = rng.random_range(1..5);
        let spec = random_spec(ns, na, nc, horizon, &mut rng);
        let sigma = rng.random::<f64>();
        let report = robust_sc_value_iteration(&spec, sigma).unwrap();
        assert!(report.max_saddle_gap <= 1e-9);
        for _ in 0..1000 {
            let pi = StochasticPolicy::random(horizon, ns, na, &mut rng);
            let v = robust_sc_policy_value(&spec, &pi, sigma).unwrap();
            for (x, y) in v.v.iter().flatten().zip(report.values.v.iter().flatten()) {
                assert!(*x <= y + 1e-8);
            }
        }
    }
}

#[test]
fn worst_confounders_stay_in_ball() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let spec = random_spec(3, 3, 3, 3, &mut rng);
    for sigma in [0.2, 0.7] {
        let report = robust_sc_value_iteration(&spec, sigma).unwrap();
        for t in 1..=3 {
            let ball = TvBall::new(spec.nominal_confounder(t).to_vec(), sigma).unwrap();
            for s in 0..3 {
                assert!(ball.contains(&report.worst_confounders[t - 1][s], 1e-9));
            }
        }
    }
}

fn simplex(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, n).prop_map(|w| {
        let total: f64 = w.iter().sum();
        w.into_iter().map(|x| x / total).collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn worst_case_is_feasible_and_optimal(
        (p0, v) in (1usize..6).prop_flat_map(|n| (simplex(n), prop::collection::vec(-3.0f64..3.0, n))),
        sigma in 0.0f64..=1.0,
    ) {
        let wc = tv_worst_case_expectation(&p0, &v, sigma).unwrap();
        let ball = TvBall::new(p0.clone(), sigma).unwrap();
        prop_assert!(ball.contains(&wc.worst, 1e-10));
        let exact = vertex_oracle_min_expectation(&p0, &v, sigma);
        prop_assert!((wc.value - exact).abs() <= 1e-9);
        let nominal: f64 = p0.iter().zip(&v).map(|(a, b)| a * b).sum();
        prop_assert!(wc.value <= nominal + 1e-12);
    }

    #[test]
    fn robust_values_monotone_in_radius(seed in any::<u64>(), lo in 0.0f64..=1.0, hi in 0.0f64..=1.0) {
        let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mdp = random_mdp(3, 2, 3, &mut rng);
        let a = robust_value_iteration_rmdp(&mdp, lo).unwrap();
        let b = robust_value_iteration_rmdp(&mdp, hi).unwrap();
        for (x, y) in b.values.v.iter().flatten().zip(a.values.v.iter().flatten()) {
            prop_assert!(*x <= y + 1e-12);
        }
        let spec = random_spec(3, 2, 2, 2, &mut rng);
        let a = robust_sc_value_iteration(&spec, lo).unwrap();
        let b = robust_sc_value_iteration(&spec, hi).unwrap();
        for (x, y) in b.values.v.iter().flatten().zip(a.values.v.iter().flatten()) {
            prop_assert!(*x <= y + 1e-9);
        }
    }

    #[test]
    fn rewards_outside_unit_interval_rejected(r in prop_oneof![-5.0f64..-1e-6, 1.000001f64..5.0]) {
        let res = rsc_core::mdp::FiniteMdp::new(1, 1, 1, vec![vec![vec![vec![1.0]]]], vec![vec![vec![r]]], None);
        prop_assert!(res.is_err());
    }
}
