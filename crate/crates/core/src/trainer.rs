//! End-to-end training: environment interaction, replay, counterfactual or
//! noise augmentation, joint structural-model training and soft actor-critic
//! updates; evaluation on both environment variants; beta sweeps.

use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::augment::{augment_batch, noise_augment, AugmentedBatch, ReplayBuffer, StateNoise, TransitionRecord};
use crate::envs::{rollout, ToyEnv, ToyEnvConfig, Variant};
use crate::error::{Result, RscError};
use crate::nn::checkpoint::{load_checkpoint, restore_into, save_checkpoint};
use crate::nn::{Parameterized, Tensor2};
use crate::sac::{CriticTarget, SacAgent, SacConfig, SacLearner};
use crate::scm::{graph_density, ScmConfig, ScmModel, ScmTrainer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    SacSmall,
    /// No policy updates; the initial stochastic actor collects data.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum Augmenter {
    Rsc,
    Gaussian { std: f64 },
    Uniform { halfwidth: f64 },
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub env: ToyEnvConfig,
    #[serde(default = "defaults::total_steps")]
    pub total_steps: usize,
    /// Percentage of each batch that is augmented.
    #[serde(default)]
    pub beta: f64,
    #[serde(default = "defaults::learner")]
    pub learner: LearnerKind,
    #[serde(default = "defaults::augmenter")]
    pub augmenter: Augmenter,
    /// `n` and `d_a` are taken from the environment.
    #[serde(default)]
    pub scm: ScmConfig,
    #[serde(default)]
    pub sac: SacConfig,
    /// Uniform-random actions before the first update.
    #[serde(default = "defaults::start_steps")]
    pub start_steps: usize,
    /// Fraction of update rounds that train the structural model only.
    #[serde(default = "defaults::warmup_fraction")]
    pub warmup_fraction: f64,
    #[serde(default = "defaults::eval_every")]
    pub eval_every: usize,
    #[serde(default = "defaults::eval_episodes")]
    pub eval_episodes: usize,
    #[serde(default = "defaults::eval_seed")]
    pub eval_seed: u64,
    #[serde(default)]
    pub seed: u64,
}

mod defaults {
    use super::*;

    pub fn total_steps() -> usize {
        8_000
    }
    pub fn learner() -> LearnerKind {
        LearnerKind::SacSmall
    }
    pub fn augmenter() -> Augmenter {
        Augmenter::None
    }
    pub fn start_steps() -> usize {
        1_000
    }
    pub fn warmup_fraction() -> f64 {
        0.1
    }
    pub fn eval_every() -> usize {
        2_000
    }
    pub fn eval_episodes() -> usize {
        10
    }
    pub fn eval_seed() -> u64 {
        12_345
    }
}

impl TrainConfig {
    pub fn new(env: ToyEnvConfig) -> Self {
        Self {
            env,
            total_steps: defaults::total_steps(),
            beta: 0.0,
            learner: defaults::learner(),
            augmenter: defaults::augmenter(),
            scm: ScmConfig::default(),
            sac: SacConfig::default(),
            start_steps: defaults::start_steps(),
            warmup_fraction: defaults::warmup_fraction(),
            eval_every: defaults::eval_every(),
            eval_episodes: defaults::eval_episodes(),
            eval_seed: defaults::eval_seed(),
            seed: 0,
        }
    }

    /// The structural-model config with dimensions matching the environment.
    pub fn resolved_scm(&self) -> ScmConfig {
        ScmConfig {
            n: self.env.obs_dim(),
            d_a: self.env.action_dim(),
            ..self.scm.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.sac.validate()?;
        self.resolved_scm().validate()?;
        if !(0.0..=100.0).contains(&self.beta) {
            return Err(RscError::Invalid(format!("beta {} outside [0, 100]", self.beta)));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(RscError::Invalid(format!("warm-up fraction {}", self.warmup_fraction)));
        }
        if self.total_steps == 0 || self.eval_every == 0 || self.eval_episodes == 0 {
            return Err(RscError::Invalid("steps, evaluation period and episodes must be positive".into()));
        }
        match self.augmenter {
            Augmenter::Gaussian { std } if !(std >= 0.0 && std.is_finite()) => {
                Err(RscError::Invalid(format!("gaussian std {std}")))
            }
            Augmenter::Uniform { halfwidth } if !(halfwidth >= 0.0 && halfwidth.is_finite()) => {
                Err(RscError::Invalid(format!("uniform halfwidth {halfwidth}")))
            }
            _ => Ok(()),
        }
    }
}

/// One row of the metrics CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub step: usize,
    pub nominal_return: f64,
    pub shifted_return: f64,
    /// Mean structural-model loss since the previous point (NaN without one).
    pub scm_loss: f64,
    /// Fraction of edges above threshold (NaN without a structural model).
    pub graph_density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMetrics {
    pub points: Vec<EvalPoint>,
    /// `(update index, loss)` per structural-model step.
    pub scm_loss_curve: Vec<(usize, f64)>,
    pub final_nominal: f64,
    pub final_shifted: f64,
    pub updates: usize,
    pub wall_clock_secs: f64,
}

impl TrainMetrics {
    pub const CSV_HEADER: &'static str = "step,nominal_return,shifted_return,scm_loss,graph_density";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for p in &self.points {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                p.step, p.nominal_return, p.shifted_return, p.scm_loss, p.graph_density
            ));
        }
        out
    }

    /// Everything except the wall clock, for determinism checks.
    pub fn same_results(&self, other: &Self) -> bool {
        let eq = |a: f64, b: f64| a == b || (a.is_nan() && b.is_nan());
        self.points.len() == other.points.len()
            && self.points.iter().zip(&other.points).all(|(a, b)| {
                a.step == b.step
                    && eq(a.nominal_return, b.nominal_return)
                    && eq(a.shifted_return, b.shifted_return)
                    && eq(a.scm_loss, b.scm_loss)
                    && eq(a.graph_density, b.graph_density)
            })
            && self.scm_loss_curve == other.scm_loss_curve
            && self.updates == other.updates
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub metrics: TrainMetrics,
    pub agent: SacAgent,
    pub scm: Option<ScmModel>,
}

/// Mean and standard deviation of horizon-normalized returns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub mean: f64,
    pub std: f64,
    pub episodes: usize,
    /// `mean / reference` when a reference return is supplied.
    pub normalized: Option<f64>,
}

/// Independent random streams, so that switching augmentation on or off
/// never shifts the draws seen by the other components.
struct Streams {
    env: ChaCha8Rng,
    act: ChaCha8Rng,
    batch: ChaCha8Rng,
    augment: ChaCha8Rng,
    scm: ChaCha8Rng,
    learner: ChaCha8Rng,
}

impl Streams {
    fn new(seed: u64) -> Self {
        let stream = |k: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(k);
            r
        };
        Self {
            env: stream(1),
            act: stream(2),
            batch: stream(3),
            augment: stream(4),
            scm: stream(5),
            learner: stream(6),
        }
    }
}

/// Replay buffer plus a flag per slot marking the last transition of an
/// episode (time-limit ends are not terminal, so they still bootstrap).
struct Replay {
    buffer: ReplayBuffer,
    episode_end: Vec<bool>,
}

impl Replay {
    fn new(capacity: usize) -> Result<Self> {
        Ok(Self {
            buffer: ReplayBuffer::new(capacity)?,
            episode_end: vec![false; capacity],
        })
    }

    fn push(&mut self, record: TransitionRecord, last: bool) -> Result<()> {
        let slot = (self.buffer.inserted() % self.buffer.capacity() as u64) as usize;
        self.buffer.push(record)?;
        self.episode_end[slot] = last;
        Ok(())
    }

    /// Up-to-`n`-step return starting at `index`.
    fn n_step_target(&self, index: usize, n: usize, gamma: f64) -> CriticTarget {
        let mut returns = 0.0;
        let mut discount = 1.0;
        let mut idx = index;
        for taken in 1.. {
            let rec = self.buffer.get(idx);
            returns += discount * rec.reward;
            discount *= gamma;
            if rec.done {
                return CriticTarget {
                    returns,
                    bootstrap_state: rec.next_state.clone(),
                    discount: 0.0,
                };
            }
            let next = if taken >= n || self.episode_end[idx] { None } else { self.buffer.successor(idx) };
            match next {
                Some(j) => idx = j,
                None => {
                    return CriticTarget {
                        returns,
                        bootstrap_state: rec.next_state.clone(),
                        discount,
                    }
                }
            }
        }
        unreachable!("the loop returns within n steps")
    }
}

fn one_step_target(rec: &TransitionRecord, gamma: f64) -> CriticTarget {
    CriticTarget {
        returns: rec.reward,
        bootstrap_state: rec.next_state.clone(),
        discount: if rec.done { 0.0 } else { gamma },
    }
}

/// Deterministic-policy returns on `episodes` episodes drawn from `seed`.
pub fn evaluate(agent: &SacAgent, env: &ToyEnvConfig, episodes: usize, seed: u64) -> Result<EvalSummary> {
    evaluate_with(env, episodes, seed, None, |obs| agent.act_deterministic(obs))
}

/// Same as [`evaluate`] for an arbitrary observation-to-action map.
pub fn evaluate_with<F>(
    env: &ToyEnvConfig,
    episodes: usize,
    seed: u64,
    reference: Option<f64>,
    mut policy: F,
) -> Result<EvalSummary>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    if episodes == 0 {
        return Err(RscError::Invalid("need at least one evaluation episode".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut returns = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        returns.push(rollout(env, |obs, _| policy(obs), &mut rng)?);
    }
    let mean = returns.iter().sum::<f64>() / episodes as f64;
    let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / episodes as f64;
    if let Some(r) = reference {
        if !(r > 0.0) {
            return Err(RscError::Invalid(format!("reference return {r} must be positive")));
        }
    }
    Ok(EvalSummary {
        mean,
        std: var.sqrt(),
        episodes,
        normalized: reference.map(|r| mean / r),
    })
}

/// Runs the full training loop.
pub fn train(config: &TrainConfig) -> Result<TrainOutcome> {
    train_with_dump(config, None)
}

/// As [`train`]; on a non-finite failure the current agent and structural
/// model are written under `dump_dir` before the error is returned.
pub fn train_with_dump(config: &TrainConfig, dump_dir: Option<&Path>) -> Result<TrainOutcome> {
    config.validate()?;
    let started = Instant::now();
    let mut streams = Streams::new(config.seed);
    let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let obs_dim = config.env.obs_dim();
    let action_dim = config.env.action_dim();
    let agent = SacAgent::new(config.sac.clone(), obs_dim, action_dim, &mut init_rng)?;
    let mut learner = SacLearner::new(agent);
    let use_scm = config.augmenter == Augmenter::Rsc;
    let mut scm = if use_scm {
        Some(ScmTrainer::new(ScmModel::new(config.resolved_scm(), &mut init_rng)?))
    } else {
        None
    };

    let result = run_loop(config, &mut streams, &mut learner, &mut scm);
    match result {
        Ok((points, curve, updates)) => {
            let last = points.last().expect("at least one evaluation");
            let metrics = TrainMetrics {
                final_nominal: last.nominal_return,
                final_shifted: last.shifted_return,
                points,
                scm_loss_curve: curve,
                updates,
                wall_clock_secs: started.elapsed().as_secs_f64(),
            };
            Ok(TrainOutcome {
                metrics,
                agent: learner.agent,
                scm: scm.map(|s| s.model),
            })
        }
        Err(err) => {
            if let (Some(dir), RscError::NonFinite(_)) = (dump_dir, &err) {
                std::fs::create_dir_all(dir)?;
                save_agent(&dir.join("diverged_agent"), &learner.agent)?;
                if let Some(s) = &scm {
                    save_scm(&dir.join("diverged_scm"), &s.model)?;
                }
            }
            Err(err)
        }
    }
}

type LoopOutput = (Vec<EvalPoint>, Vec<(usize, f64)>, usize);

fn run_loop(
    config: &TrainConfig,
    streams: &mut Streams,
    learner: &mut SacLearner,
    scm: &mut Option<ScmTrainer>,
) -> Result<LoopOutput> {
    let sac = &config.sac;
    let spu = sac.steps_per_update;
    let rounds = config.total_steps.saturating_sub(config.start_steps) / spu;
    let total_updates = rounds * spu;
    let warmup_updates = (config.warmup_fraction * total_updates as f64).floor() as usize;

    let mut replay = Replay::new(sac.buffer_capacity)?;
    let mut env = ToyEnv::new(config.env.clone())?;
    let mut obs = env.reset(&mut streams.env);
    let mut points = Vec::new();
    let mut curve = Vec::new();
    let mut pending_loss = Vec::new();
    let mut update = 0usize;

    for step in 1..=config.total_steps {
        let action = if step <= config.start_steps {
            (0..config.env.action_dim()).map(|_| streams.act.random_range(-1.0..1.0)).collect()
        } else {
            learner.agent.act_stochastic(&obs, &mut streams.act)?
        };
        let out = env.step(&action)?;
        let record = TransitionRecord {
            state: obs.clone(),
            action,
            reward: out.reward,
            next_state: out.observation.clone(),
            done: false,
        };
        replay.push(record, out.done)?;
        obs = if out.done { env.reset(&mut streams.env) } else { out.observation };

        if step > config.start_steps && (step - config.start_steps) % spu == 0 && update < total_updates {
            for _ in 0..spu {
                let progress = update as f64 / total_updates.max(1) as f64;
                let warm = update < warmup_updates;
                let loss = update_once(config, &replay, learner, scm.as_mut(), streams, progress, warm)?;
                if let Some(l) = loss {
                    curve.push((update, l));
                    pending_loss.push(l);
                }
                update += 1;
            }
        }

        if step % config.eval_every == 0 || step == config.total_steps {
            let nominal = evaluate(&learner.agent, &config.env, config.eval_episodes, config.eval_seed)?;
            let shifted = evaluate(
                &learner.agent,
                &config.env.with_variant(Variant::Shifted),
                config.eval_episodes,
                config.eval_seed,
            )?;
            let scm_loss = if pending_loss.is_empty() {
                f64::NAN
            } else {
                pending_loss.iter().sum::<f64>() / pending_loss.len() as f64
            };
            pending_loss.clear();
            let density = scm
                .as_ref()
                .map_or(f64::NAN, |s| graph_density(&s.model, s.model.config.threshold));
            points.push(EvalPoint {
                step,
                nominal_return: nominal.mean,
                shifted_return: shifted.mean,
                scm_loss,
                graph_density: density,
            });
        }
    }
    Ok((points, curve, update))
}

/// One update: structural-model step on the untouched records, then (after
/// warm-up) a policy step on the mixed batch. Returns the structural loss.
fn update_once(
    config: &TrainConfig,
    replay: &Replay,
    learner: &mut SacLearner,
    scm: Option<&mut ScmTrainer>,
    streams: &mut Streams,
    progress: f64,
    warm: bool,
) -> Result<Option<f64>> {
    let sac = &config.sac;
    let indices = replay.buffer.sample_indices(sac.batch_size, &mut streams.batch)?;
    let batch: Vec<TransitionRecord> = indices.iter().map(|&i| replay.buffer.get(i).clone()).collect();

    let augmented = if warm {
        AugmentedBatch {
            records: batch.clone(),
            modified: Vec::new(),
        }
    } else {
        match (config.augmenter, scm.as_deref()) {
            (Augmenter::Rsc, Some(s)) => augment_batch(&batch, config.beta, &s.model, &mut streams.augment)?,
            (Augmenter::Gaussian { std }, _) => {
                noise_augment(&batch, config.beta, StateNoise::Gaussian { std }, &mut streams.augment)?
            }
            (Augmenter::Uniform { halfwidth }, _) => {
                noise_augment(&batch, config.beta, StateNoise::Uniform { halfwidth }, &mut streams.augment)?
            }
            _ => AugmentedBatch {
                records: batch.clone(),
                modified: Vec::new(),
            },
        }
    };

    let mut scm_loss = None;
    if let Some(s) = scm {
        let untouched: Vec<TransitionRecord> = batch
            .iter()
            .enumerate()
            .filter(|(i, _)| augmented.modified.binary_search(i).is_err())
            .map(|(_, r)| r.clone())
            .collect();
        if !untouched.is_empty() {
            scm_loss = Some(s.step(&untouched, progress, &mut streams.scm)?.total);
        }
    }

    if warm || config.learner == LearnerKind::None {
        return Ok(scm_loss);
    }
    let mut targets = Vec::with_capacity(indices.len());
    for (i, &idx) in indices.iter().enumerate() {
        if augmented.modified.binary_search(&i).is_ok() {
            targets.push(one_step_target(&augmented.records[i], sac.gamma));
        } else {
            targets.push(replay.n_step_target(idx, sac.n_step, sac.gamma));
        }
    }
    let states: Vec<Vec<f64>> = augmented.records.iter().map(|r| r.state.clone()).collect();
    let actions: Vec<Vec<f64>> = augmented.records.iter().map(|r| r.action.clone()).collect();
    let losses = learner.update(&states, &actions, &targets, &mut streams.learner)?;
    if !losses.critic.is_finite() || !losses.actor.is_finite() {
        return Err(RscError::NonFinite("soft actor-critic loss".into()));
    }
    Ok(scm_loss)
}

/// One row of a beta sweep, averaged over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub beta: f64,
    pub nominal_return: f64,
    pub shifted_return: f64,
    pub nominal_per_seed: Vec<f64>,
    pub shifted_per_seed: Vec<f64>,
}

/// Trains once per `(beta, seed)` pair with the structural augmenter.
pub fn sweep_beta(config: &TrainConfig, betas: &[f64], seeds: &[u64]) -> Result<Vec<SweepRow>> {
    if seeds.is_empty() {
        return Err(RscError::Invalid("sweep needs at least one seed".into()));
    }
    let mut rows = Vec::with_capacity(betas.len());
    for &beta in betas {
        let mut nominal = Vec::new();
        let mut shifted = Vec::new();
        for &seed in seeds {
            let cfg = TrainConfig {
                beta,
                seed,
                augmenter: Augmenter::Rsc,
                ..config.clone()
            };
            let m = train(&cfg)?.metrics;
            nominal.push(m.final_nominal);
            shifted.push(m.final_shifted);
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        rows.push(SweepRow {
            beta,
            nominal_return: mean(&nominal),
            shifted_return: mean(&shifted),
            nominal_per_seed: nominal,
            shifted_per_seed: shifted,
        });
    }
    Ok(rows)
}

pub const SWEEP_CSV_HEADER: &str = "beta,nominal_return,shifted_return";

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = format!("{SWEEP_CSV_HEADER}\n");
    for r in rows {
        out.push_str(&format!("{},{},{}\n", r.beta, r.nominal_return, r.shifted_return));
    }
    out
}

fn net_names(prefix: &str, layers: usize) -> Vec<String> {
    (0..layers)
        .flat_map(|i| [format!("{prefix}.{i}.weight"), format!("{prefix}.{i}.bias")])
        .collect()
}

fn agent_tensors(agent: &SacAgent) -> Vec<(String, &Tensor2)> {
    let mut out = Vec::new();
    for (prefix, net) in [
        ("actor", &agent.actor),
        ("q1", &agent.q1),
        ("q2", &agent.q2),
        ("q1_target", &agent.q1_target),
        ("q2_target", &agent.q2_target),
    ] {
        out.extend(net_names(prefix, net.layers().len()).into_iter().zip(net.params()));
    }
    out
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AgentMeta {
    kind: String,
    obs_dim: usize,
    action_dim: usize,
    sac: SacConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<serde_json::Value>,
}

/// Writes `stem.bin` and `stem.json`.
pub fn save_agent(stem: &Path, agent: &SacAgent) -> Result<()> {
    save_agent_with(stem, agent, None)
}

/// As [`save_agent`], storing `provenance` verbatim in the manifest.
pub fn save_agent_with(stem: &Path, agent: &SacAgent, provenance: Option<serde_json::Value>) -> Result<()> {
    let meta = AgentMeta {
        kind: "sac_agent".into(),
        obs_dim: agent.obs_dim,
        action_dim: agent.action_dim,
        sac: agent.config.clone(),
        provenance,
    };
    save_checkpoint(stem, &agent_tensors(agent), serde_json::to_value(meta)?)
}

pub fn load_agent(stem: &Path) -> Result<SacAgent> {
    let (tensors, meta) = load_checkpoint(stem)?;
    let meta: AgentMeta = serde_json::from_value(meta)?;
    if meta.kind != "sac_agent" {
        return Err(RscError::Invalid(format!("checkpoint holds a {}, not an agent", meta.kind)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut agent = SacAgent::new(meta.sac, meta.obs_dim, meta.action_dim, &mut rng)?;
    let names: Vec<String> = agent_tensors(&agent).into_iter().map(|(n, _)| n).collect();
    let mut params = agent.actor.params_mut();
    params.extend(agent.q1.params_mut());
    params.extend(agent.q2.params_mut());
    params.extend(agent.q1_target.params_mut());
    params.extend(agent.q2_target.params_mut());
    restore_into(params, &names, &tensors)?;
    Ok(agent)
}

pub fn save_scm(stem: &Path, model: &ScmModel) -> Result<()> {
    save_scm_with(stem, model, None)
}

/// As [`save_scm`], storing `provenance` verbatim in the manifest.
pub fn save_scm_with(stem: &Path, model: &ScmModel, provenance: Option<serde_json::Value>) -> Result<()> {
    let names = model.param_names();
    let tensors: Vec<(String, &Tensor2)> = names.into_iter().zip(model.params()).collect();
    let mut meta = serde_json::json!({ "kind": "scm", "config": model.config });
    if let Some(p) = provenance {
        meta["provenance"] = p;
    }
    save_checkpoint(stem, &tensors, meta)
}

pub fn load_scm(stem: &Path) -> Result<ScmModel> {
    let (tensors, meta) = load_checkpoint(stem)?;
    if meta.get("kind").and_then(|k| k.as_str()) != Some("scm") {
        return Err(RscError::Invalid("checkpoint does not hold a structural model".into()));
    }
    let config: ScmConfig = serde_json::from_value(meta["config"].clone())?;
    let mut model = ScmModel::new(config, &mut ChaCha8Rng::seed_from_u64(0))?;
    let names = model.param_names();
    restore_into(model.params_mut(), &names, &tensors)?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::EnvName;

    #[test]
    fn n_step_stops_at_episode_end() {
        let mut replay = Replay::new(16).unwrap();
        for i in 0..6 {
            let rec = TransitionRecord {
                state: vec![i as f64],
                action: vec![0.0],
                reward: 1.0,
                next_state: vec![i as f64 + 1.0],
                done: false,
            };
            replay.push(rec, i == 2).unwrap();
        }
        let t = replay.n_step_target(0, 4, 0.5);
        assert_eq!(t.returns, 1.75);
        assert_eq!(t.discount, 0.125);
        assert_eq!(t.bootstrap_state, vec![3.0]);
        let t = replay.n_step_target(3, 4, 0.5);
        assert_eq!(t.returns, 1.0 + 0.5 + 0.25);
        assert_eq!(t.bootstrap_state, vec![6.0]);
        let t = replay.n_step_target(1, 2, 0.5);
        assert_eq!((t.returns, t.discount), (1.5, 0.25));
    }

    #[test]
    fn config_validation() {
        let mut cfg = TrainConfig::new(ToyEnvConfig::new(EnvName::ToyCompose));
        assert!(cfg.validate().is_ok());
        cfg.beta = 101.0;
        assert!(cfg.validate().is_err());
        cfg.beta = 50.0;
        cfg.augmenter = Augmenter::Gaussian { std: -1.0 };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn streams_are_distinct() {
        let mut s = Streams::new(3);
        let a: u64 = s.env.random();
        let b: u64 = s.act.random();
        assert_ne!(a, b);
    }
}
