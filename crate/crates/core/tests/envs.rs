use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rsc_core::augment::{augment_batch, TransitionRecord};
use rsc_core::envs::{
    reward, rollout, scripted_action, transition, EnvName, ToyEnv, ToyEnvConfig, Variant, ACTION_DIM,
};
use rsc_core::scm::{ScmConfig, ScmModel};

const ENVS: [EnvName; 2] = [EnvName::ToyLift, EnvName::ToyCompose];

fn resets(config: &ToyEnvConfig, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut env = ToyEnv::new(config.clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| env.reset(&mut rng)).collect()
}

fn mean_return<P>(config: &ToyEnvConfig, episodes: usize, seed: u64, mut policy: P) -> f64
where
    P: FnMut(&[f64], &mut ChaCha8Rng) -> Vec<f64>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total: f64 = (0..episodes)
        .map(|_| rollout(config, |obs, rng| Ok(policy(obs, rng)), &mut rng).unwrap())
        .sum();
    total / episodes as f64
}

/// Two-sample Kolmogorov–Smirnov statistic.
fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

/// Critical value at α = 0.01 for sample sizes `n` and `m`.
fn ks_critical(n: usize, m: usize) -> f64 {
    1.628 * (((n + m) as f64) / ((n * m) as f64)).sqrt()
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

/// Plug-in mutual information, in bits, of two binary labels.
fn binary_mi(pairs: &[(bool, bool)]) -> f64 {
    let n = pairs.len() as f64;
    let mut joint = [[0.0; 2]; 2];
    for &(a, b) in pairs {
        joint[a as usize][b as usize] += 1.0 / n;
    }
    let pa = [joint[0][0] + joint[0][1], joint[1][0] + joint[1][1]];
    let pb = [joint[0][0] + joint[1][0], joint[0][1] + joint[1][1]];
    let mut mi = 0.0;
    for a in 0..2 {
        for b in 0..2 {
            if joint[a][b] > 0.0 {
                mi += joint[a][b] * (joint[a][b] / (pa[a] * pb[b])).log2();
            }
        }
    }
    mi
}

#[test]
fn zero_action_on_goal_earns_full_reward() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for env in ENVS {
        for state in resets(&ToyEnvConfig::new(env), 50, rng.random()) {
            let mut on_goal = state.clone();
            on_goal[0] = state[2];
            on_goal[1] = if env == EnvName::ToyLift { state[3] } else { 0.0 };
            let (next, r) = transition(env, &on_goal, &[0.0, 0.0]).unwrap();
            assert_eq!(r, 1.0);
            assert_eq!(next, on_goal);
        }
    }
}

#[test]
fn full_speed_away_from_goal_lowers_reward() {
    for env in ENVS {
        for state in resets(&ToyEnvConfig::new(env), 50, 4) {
            let mut s = state.clone();
            s[0] = state[2];
            s[1] = if env == EnvName::ToyLift { state[3] } else { 0.0 };
            // Along y, toward the centre so the walls are never reached.
            let away = if env == EnvName::ToyLift { -state[3].signum() } else { 1.0 };
            let mut last = reward(env, &s);
            for _ in 0..4 {
                let (next, _) = transition(env, &s, &[0.0, away]).unwrap();
                let r = reward(env, &next);
                assert!(r < last, "{env:?}: {r} !< {last}");
                last = r;
                s = next;
            }
        }
    }
}

#[test]
fn scripted_controller_is_near_optimal() {
    for env in ENVS {
        for variant in [Variant::Nominal, Variant::Shifted] {
            let cfg = ToyEnvConfig::new(env).with_variant(variant);
            let ret = mean_return(&cfg, 200, 5, |obs, _| scripted_action(env, obs));
            assert!(ret >= 0.9, "{env:?} {variant:?}: {ret}");
        }
    }
}

#[test]
fn random_policy_scores_low_on_lift() {
    let cfg = ToyEnvConfig::new(EnvName::ToyLift);
    let ret = mean_return(&cfg, 500, 6, |_, rng| {
        (0..ACTION_DIM).map(|_| rng.random_range(-1.0..1.0)).collect()
    });
    assert!((0.0..=0.3).contains(&ret), "random return {ret}");
}

#[test]
fn full_strength_couples_the_confounded_pair() {
    for env in ENVS {
        let (i, j) = env.coupled_dims();
        for (variant, sign) in [(Variant::Nominal, 1.0), (Variant::Shifted, -1.0)] {
            let states = resets(&ToyEnvConfig::new(env).with_variant(variant), 10_000, 7);
            let x: Vec<f64> = states.iter().map(|s| s[i].signum()).collect();
            let y: Vec<f64> = states.iter().map(|s| s[j]).collect();
            // Lift pairs the left half with color +1.
            let expected = if env == EnvName::ToyLift { -sign } else { sign };
            assert!((pearson(&x, &y) - expected).abs() < 1e-12, "{env:?} {variant:?}");
        }
    }
}

#[test]
fn zero_strength_makes_variants_indistinguishable() {
    for env in ENVS {
        let mut cfg = ToyEnvConfig::new(env);
        cfg.correlation_strength = 0.0;
        let (i, j) = env.coupled_dims();
        let nominal = resets(&cfg, 10_000, 8);
        let shifted = resets(&cfg.with_variant(Variant::Shifted), 10_000, 9);
        let crit = ks_critical(nominal.len(), shifted.len());
        let product = |s: &Vec<f64>| s[i].signum() * s[j];
        let a: Vec<f64> = nominal.iter().map(product).collect();
        let b: Vec<f64> = shifted.iter().map(product).collect();
        assert!(ks_statistic(&a, &b) < crit, "{env:?} coupled product");
        for d in 0..env.obs_dim() {
            let a: Vec<f64> = nominal.iter().map(|s| s[d]).collect();
            let b: Vec<f64> = shifted.iter().map(|s| s[d]).collect();
            assert!(ks_statistic(&a, &b) < crit, "{env:?} dim {d}");
        }
    }
}

#[test]
fn full_strength_variants_are_distinguishable() {
    for env in ENVS {
        let cfg = ToyEnvConfig::new(env);
        let (i, j) = env.coupled_dims();
        let product = |s: &Vec<f64>| s[i].signum() * s[j];
        let a: Vec<f64> = resets(&cfg, 2_000, 10).iter().map(product).collect();
        let b: Vec<f64> = resets(&cfg.with_variant(Variant::Shifted), 2_000, 11)
            .iter()
            .map(product)
            .collect();
        assert!(ks_statistic(&a, &b) > ks_critical(a.len(), b.len()));
    }
}

#[test]
fn fixed_seed_repeats_resets() {
    for env in ENVS {
        let cfg = ToyEnvConfig::new(env);
        assert_eq!(resets(&cfg, 100, 12), resets(&cfg, 100, 12));
    }
}

#[test]
fn variants_share_dynamics_and_reward() {
    // At zero strength both variants reset identically, so any difference in
    // the steps would come from the dynamics.
    for env in ENVS {
        let mut nominal = ToyEnvConfig::new(env);
        nominal.correlation_strength = 0.0;
        let shifted = nominal.with_variant(Variant::Shifted);
        let mut a = ToyEnv::new(nominal.clone()).unwrap();
        let mut b = ToyEnv::new(shifted).unwrap();
        let mut ra = ChaCha8Rng::seed_from_u64(13);
        let mut rb = ChaCha8Rng::seed_from_u64(13);
        let mut acts = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..20 {
            assert_eq!(a.reset(&mut ra), b.reset(&mut rb));
            for _ in 0..nominal.horizon {
                let act = [acts.random_range(-2.0..2.0), acts.random_range(-2.0..2.0)];
                assert_eq!(a.step(&act).unwrap(), b.step(&act).unwrap());
            }
        }
    }
}

#[test]
fn color_blind_policy_scores_identically_across_lift_variants() {
    let cfg = ToyEnvConfig::new(EnvName::ToyLift);
    let policy = |obs: &[f64], _: &mut ChaCha8Rng| scripted_action(EnvName::ToyLift, obs);
    let nominal = mean_return(&cfg, 300, 14, policy);
    let shifted = mean_return(&cfg.with_variant(Variant::Shifted), 300, 14, policy);
    assert_eq!(nominal, shifted);
}

#[test]
fn augmentation_decorrelates_color_and_position() {
    let cfg = ToyEnvConfig::new(EnvName::ToyLift);
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let mut env = ToyEnv::new(cfg).unwrap();
    let mut obs = env.reset(&mut rng);
    let mut buffer = Vec::new();
    while buffer.len() < 4096 {
        let action: Vec<f64> = (0..ACTION_DIM).map(|_| rng.random_range(-1.0..1.0)).collect();
        let step = env.step(&action).unwrap();
        buffer.push(TransitionRecord {
            state: obs.clone(),
            action,
            reward: step.reward,
            next_state: step.observation.clone(),
            done: false,
        });
        obs = if step.done { env.reset(&mut rng) } else { step.observation };
    }
    let scm = ScmModel::new(ScmConfig { n: 5, d_a: 2, ..ScmConfig::default() }, &mut rng).unwrap();
    let label = |s: &[f64]| (s[2] < 0.0, s[4] > 0.0);
    let raw: Vec<_> = buffer.iter().map(|r| label(&r.state)).collect();
    let mut augmented = Vec::new();
    for chunk in buffer.chunks(128) {
        let out = augment_batch(chunk, 50.0, &scm, &mut rng).unwrap();
        augmented.extend(out.modified.iter().map(|&k| label(&out.records[k].state)));
    }
    let (before, after) = (binary_mi(&raw), binary_mi(&augmented));
    assert!(before > 0.99, "raw buffer MI {before}");
    assert!(after <= 0.25 * before, "augmented MI {after} vs raw {before}");
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn rewards_stay_in_unit_interval(
        px in -1.0f64..1.0, py in -1.0f64..1.0, g in -1.0f64..1.0, flag in any::<bool>(),
        ax in -3.0f64..3.0, ay in -3.0f64..3.0,
    ) {
        let m = if flag { 1.0 } else { -1.0 };
        for (env, state) in [
            (EnvName::ToyCompose, vec![px, py, g, m]),
            (EnvName::ToyLift, vec![px, py, g, -g, m]),
        ] {
            let (next, r) = transition(env, &state, &[ax, ay]).unwrap();
            prop_assert!((0.0..=1.0).contains(&r));
            prop_assert!(next[..2].iter().all(|p| (-1.0..=1.0).contains(p)));
            prop_assert_eq!(&next[2..], &state[2..]);
        }
    }
}
