use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rsc_core::augment::{noise_augment, StateNoise, TransitionRecord};
use rsc_core::envs::{scripted_action, EnvName, ToyEnvConfig, Variant};
use rsc_core::nn::Tensor2;
use rsc_core::scm::{ScmConfig, ScmModel};
use rsc_core::trainer::{
    evaluate, evaluate_with, load_agent, load_scm, save_agent, save_scm, train, train_with_dump, Augmenter,
    TrainConfig,
};

fn short(env: EnvName) -> TrainConfig {
    let mut cfg = TrainConfig::new(ToyEnvConfig::new(env));
    cfg.total_steps = 1_400;
    cfg.start_steps = 400;
    cfg.eval_every = 500;
    cfg.eval_episodes = 3;
    cfg.sac.batch_size = 32;
    cfg.sac.hidden = vec![16, 16];
    cfg.scm.encoder_hidden = vec![8];
    cfg.scm.decoder_hidden = vec![8];
    cfg
}

fn records(count: usize) -> Vec<TransitionRecord> {
    (0..count)
        .map(|i| {
            let x = i as f64 / count as f64;
            TransitionRecord {
                state: vec![x, -x, 0.5, 1.0],
                action: vec![0.1, -0.2],
                reward: x,
                next_state: vec![x + 0.1, -x, 0.5, 1.0],
                done: false,
            }
        })
        .collect()
}

#[test]
fn training_is_deterministic_per_seed() {
    let mut cfg = short(EnvName::ToyCompose);
    cfg.augmenter = Augmenter::Rsc;
    cfg.beta = 50.0;
    let a = train(&cfg).unwrap();
    let b = train(&cfg).unwrap();
    assert!(a.metrics.same_results(&b.metrics));
    assert_eq!(a.agent, b.agent);
    assert_eq!(a.scm, b.scm);
    assert_eq!(a.metrics.points.len(), 3);
    assert_eq!(a.metrics.points.last().unwrap().step, 1_400);

    cfg.seed = 1;
    let c = train(&cfg).unwrap();
    assert_ne!(a.agent, c.agent);
}

#[test]
fn zero_beta_structural_run_matches_plain_run() {
    let mut plain = short(EnvName::ToyCompose);
    plain.augmenter = Augmenter::None;
    let mut rsc = plain.clone();
    rsc.augmenter = Augmenter::Rsc;
    rsc.beta = 0.0;
    let a = train(&plain).unwrap();
    let b = train(&rsc).unwrap();
    assert_eq!(a.agent, b.agent);
    for (p, q) in a.metrics.points.iter().zip(&b.metrics.points) {
        assert_eq!(p.nominal_return, q.nominal_return);
        assert_eq!(p.shifted_return, q.shifted_return);
        assert!(p.scm_loss.is_nan());
        assert!(q.scm_loss.is_finite());
    }
    assert!(b.scm.is_some());
}

#[test]
fn noise_augmenters_touch_only_states() {
    let batch = records(40);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for noise in [StateNoise::Gaussian { std: 0.3 }, StateNoise::Uniform { halfwidth: 0.3 }] {
        let out = noise_augment(&batch, 25.0, noise, &mut rng).unwrap();
        assert_eq!(out.modified.len(), 10);
        for (i, (old, new)) in batch.iter().zip(&out.records).enumerate() {
            assert_eq!(old.action, new.action);
            assert_eq!(old.reward, new.reward);
            assert_eq!(old.next_state, new.next_state);
            assert_eq!(old.state != new.state, out.modified.contains(&i), "record {i}");
        }
    }
    assert!(noise_augment(&batch, 101.0, StateNoise::Gaussian { std: 0.1 }, &mut rng).is_err());
}

#[test]
fn noise_baselines_train() {
    for augmenter in [Augmenter::Gaussian { std: 0.1 }, Augmenter::Uniform { halfwidth: 0.1 }] {
        let mut cfg = short(EnvName::ToyLift);
        cfg.augmenter = augmenter;
        cfg.beta = 50.0;
        let out = train(&cfg).unwrap();
        assert!(out.scm.is_none());
        assert!(out.metrics.final_nominal.is_finite());
    }
}

#[test]
fn checkpoints_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = short(EnvName::ToyLift);
    cfg.augmenter = Augmenter::Rsc;
    cfg.beta = 20.0;
    let out = train(&cfg).unwrap();

    let stem = dir.path().join("agent");
    save_agent(&stem, &out.agent).unwrap();
    let agent = load_agent(&stem).unwrap();
    assert_eq!(agent, out.agent);
    let a = evaluate(&out.agent, &cfg.env, 4, 9).unwrap();
    let b = evaluate(&agent, &cfg.env, 4, 9).unwrap();
    assert_eq!(a, b);

    let scm = out.scm.unwrap();
    let scm_stem = dir.path().join("scm");
    save_scm(&scm_stem, &scm).unwrap();
    assert_eq!(load_scm(&scm_stem).unwrap(), scm);

    assert!(load_agent(&scm_stem).is_err());
    assert!(load_scm(&stem).is_err());
    assert!(load_agent(&dir.path().join("missing")).is_err());
}

#[test]
fn divergence_dumps_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = short(EnvName::ToyCompose);
    cfg.augmenter = Augmenter::Rsc;
    cfg.beta = 50.0;
    cfg.sac.critic_lr = 1e300;
    cfg.sac.actor_lr = 1e300;
    let err = train_with_dump(&cfg, Some(dir.path())).unwrap_err();
    assert!(!err.is_validation(), "{err}");
    assert!(load_agent(&dir.path().join("diverged_agent")).is_ok());
    assert!(load_scm(&dir.path().join("diverged_scm")).is_ok());
}

#[test]
fn invalid_configs_are_rejected() {
    let mut cfg = short(EnvName::ToyLift);
    cfg.beta = 120.0;
    assert!(train(&cfg).unwrap_err().is_validation());
    let mut cfg = short(EnvName::ToyLift);
    cfg.sac.gamma = 1.0;
    assert!(train(&cfg).unwrap_err().is_validation());
    let mut cfg = short(EnvName::ToyLift);
    cfg.augmenter = Augmenter::Gaussian { std: -1.0 };
    assert!(train(&cfg).unwrap_err().is_validation());
}

#[test]
fn evaluation_normalizes_by_reference() {
    let env = ToyEnvConfig::new(EnvName::ToyLift);
    let scripted = evaluate_with(&env, 50, 3, None, |obs| Ok(scripted_action(EnvName::ToyLift, obs))).unwrap();
    assert!(scripted.mean >= 0.9);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let random = evaluate_with(&env, 50, 3, Some(scripted.mean), |_| {
        Ok(Tensor2::uniform(1, 2, 1.0, &mut rng).data().to_vec())
    })
    .unwrap();
    let normalized = random.normalized.unwrap();
    assert!((0.0..=0.3).contains(&normalized), "{normalized}");
    assert!(evaluate_with(&env, 0, 3, None, |obs| Ok(obs[..2].to_vec())).is_err());
    assert!(evaluate_with(&env, 5, 3, Some(0.0), |obs| Ok(obs[..2].to_vec())).is_err());
}

#[test]
fn structural_model_dims_follow_the_environment() {
    let cfg = TrainConfig::new(ToyEnvConfig::new(EnvName::ToyLift).with_variant(Variant::Nominal));
    let scm = cfg.resolved_scm();
    assert_eq!((scm.n, scm.d_a), (5, 2));
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(ScmModel::new(ScmConfig { n: 0, ..scm }, &mut rng).is_err());
}

#[test]
fn plain_sac_approaches_scripted_controller_on_lift() {
    let env = ToyEnvConfig::new(EnvName::ToyLift);
    let episodes = 20;
    let scripted = evaluate_with(&env, episodes, 12_345, None, |obs| Ok(scripted_action(EnvName::ToyLift, obs)))
        .unwrap()
        .mean;
    let finals: Vec<f64> = (0..5)
        .map(|seed| {
            let mut cfg = TrainConfig::new(env.clone());
            cfg.seed = seed;
            cfg.eval_episodes = episodes;
            train(&cfg).unwrap().metrics.final_nominal
        })
        .collect();
    let mean = finals.iter().sum::<f64>() / finals.len() as f64;
    assert!(mean >= 0.85 * scripted, "sac {finals:?} vs scripted {scripted}");
}
