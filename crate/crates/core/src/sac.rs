//! Soft actor-critic with a tanh-squashed Gaussian actor, twin critics with
//! a min backup, Polyak-averaged target critics and a fixed entropy weight.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RscError};
use crate::nn::{polyak_update, Activation, Adam, DenseNet, Graph, Parameterized, Tensor2, Var};

const LOG_STD_MIN: f64 = -5.0;
const LOG_STD_MAX: f64 = 2.0;
/// Keeps `ln(1 − tanh²)` finite at saturation.
const SQUASH_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SacConfig {
    pub gamma: f64,
    /// Soft target update weight.
    pub tau: f64,
    /// Entropy weight.
    pub alpha: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub hidden: Vec<usize>,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Environment steps between update rounds; each round runs this many
    /// gradient updates.
    pub steps_per_update: usize,
    /// Horizon of the multi-step return.
    pub n_step: usize,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            tau: 0.005,
            alpha: 0.1,
            actor_lr: 3e-4,
            critic_lr: 3e-4,
            hidden: vec![64, 64],
            batch_size: 128,
            buffer_capacity: 100_000,
            steps_per_update: 10,
            n_step: 4,
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(RscError::Invalid(format!("discount {} outside (0, 1)", self.gamma)));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(RscError::Invalid(format!("soft update weight {}", self.tau)));
        }
        if !(self.alpha > 0.0) || !(self.actor_lr > 0.0) || !(self.critic_lr > 0.0) {
            return Err(RscError::Invalid("entropy weight and learning rates must be positive".into()));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(RscError::Invalid("hidden widths must be non-empty and positive".into()));
        }
        if self.batch_size == 0 || self.buffer_capacity == 0 || self.steps_per_update == 0 || self.n_step == 0 {
            return Err(RscError::Invalid("batch, buffer, update period and n-step must be positive".into()));
        }
        Ok(())
    }
}

/// Bootstrapped regression target for one transition:
/// `y = returns + discount · soft_value(bootstrap_state)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticTarget {
    pub returns: f64,
    pub bootstrap_state: Vec<f64>,
    /// `γ^k`, or zero after a terminal transition.
    pub discount: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SacLosses {
    pub critic: f64,
    pub actor: f64,
    pub entropy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SacAgent {
    pub config: SacConfig,
    pub obs_dim: usize,
    pub action_dim: usize,
    /// Outputs the mean then the log standard deviation.
    pub actor: DenseNet,
    pub q1: DenseNet,
    pub q2: DenseNet,
    pub q1_target: DenseNet,
    pub q2_target: DenseNet,
}

/// Agent plus optimizer state.
#[derive(Debug, Clone)]
pub struct SacLearner {
    pub agent: SacAgent,
    actor_opt: Adam,
    q1_opt: Adam,
    q2_opt: Adam,
}

fn sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut s = vec![input];
    s.extend(hidden);
    s.push(output);
    s
}

fn constants(net: &DenseNet, g: &mut Graph) -> Result<Vec<Var>> {
    net.params().into_iter().map(|p| g.constant(p.clone())).collect()
}

fn stack(rows: &[Vec<f64>]) -> Result<Tensor2> {
    Tensor2::from_rows(rows)
}

impl SacAgent {
    pub fn new<R: Rng + ?Sized>(config: SacConfig, obs_dim: usize, action_dim: usize, rng: &mut R) -> Result<Self> {
        config.validate()?;
        if obs_dim == 0 || action_dim == 0 {
            return Err(RscError::Invalid("observation and action sizes must be positive".into()));
        }
        let actor = DenseNet::new(
            &sizes(obs_dim, &config.hidden, 2 * action_dim),
            Activation::Relu,
            Activation::Identity,
            rng,
        )?;
        let critic_sizes = sizes(obs_dim + action_dim, &config.hidden, 1);
        let q1 = DenseNet::new(&critic_sizes, Activation::Relu, Activation::Identity, rng)?;
        let q2 = DenseNet::new(&critic_sizes, Activation::Relu, Activation::Identity, rng)?;
        Ok(Self {
            q1_target: q1.clone(),
            q2_target: q2.clone(),
            config,
            obs_dim,
            action_dim,
            actor,
            q1,
            q2,
        })
    }

    fn check_obs(&self, obs: &[f64]) -> Result<()> {
        if obs.len() != self.obs_dim {
            return Err(RscError::Shape(format!(
                "observation of {} dims, agent expects {}",
                obs.len(),
                self.obs_dim
            )));
        }
        Ok(())
    }

    /// `tanh` of the actor mean.
    pub fn act_deterministic(&self, obs: &[f64]) -> Result<Vec<f64>> {
        self.check_obs(obs)?;
        let out = self.actor.forward(&Tensor2::row(obs))?;
        Ok(out.row_slice(0)[..self.action_dim].iter().map(|m| m.tanh()).collect())
    }

    pub fn act_stochastic<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        self.check_obs(obs)?;
        let (actions, _) = self.sample_actions(&Tensor2::row(obs), rng)?;
        Ok(actions.row_slice(0).to_vec())
    }

    /// Squashed samples and their log-densities for a batch of observations,
    /// without recording gradients.
    pub fn sample_actions<R: Rng + ?Sized>(&self, obs: &Tensor2, rng: &mut R) -> Result<(Tensor2, Vec<f64>)> {
        let out = self.actor.forward(obs)?;
        let d = self.action_dim;
        let mut actions = Tensor2::zeros(obs.rows(), d);
        let mut logp = vec![0.0; obs.rows()];
        for r in 0..obs.rows() {
            let row = out.row_slice(r);
            for i in 0..d {
                let log_std = row[d + i].clamp(LOG_STD_MIN, LOG_STD_MAX);
                let eps: f64 = rng.sample(StandardNormal);
                let a = (row[i] + log_std.exp() * eps).tanh();
                actions.set(r, i, a);
                logp[r] += -0.5 * eps * eps - log_std - 0.5 * (2.0 * std::f64::consts::PI).ln()
                    - (1.0 - a * a + SQUASH_EPS).ln();
            }
        }
        Ok((actions, logp))
    }

    fn critic_input(obs: &Tensor2, actions: &Tensor2) -> Result<Tensor2> {
        let rows: Vec<Vec<f64>> = (0..obs.rows())
            .map(|r| obs.row_slice(r).iter().chain(actions.row_slice(r)).copied().collect())
            .collect();
        stack(&rows)
    }

    /// `min(Q1, Q2)` of the online critics.
    pub fn q_value(&self, obs: &[f64], action: &[f64]) -> Result<f64> {
        let x = Self::critic_input(&Tensor2::row(obs), &Tensor2::row(action))?;
        Ok(self.q1.forward(&x)?.item().min(self.q2.forward(&x)?.item()))
    }
}

impl SacLearner {
    pub fn new(agent: SacAgent) -> Self {
        let actor_opt = Adam::new(&agent.actor.params(), agent.config.actor_lr);
        let q1_opt = Adam::new(&agent.q1.params(), agent.config.critic_lr);
        let q2_opt = Adam::new(&agent.q2.params(), agent.config.critic_lr);
        Self {
            agent,
            actor_opt,
            q1_opt,
            q2_opt,
        }
    }

    /// One critic step, one actor step and a soft target update.
    pub fn update<R: Rng + ?Sized>(
        &mut self,
        states: &[Vec<f64>],
        actions: &[Vec<f64>],
        targets: &[CriticTarget],
        rng: &mut R,
    ) -> Result<SacLosses> {
        if states.len() != actions.len() || states.len() != targets.len() || states.is_empty() {
            return Err(RscError::Shape("batch columns differ in length".into()));
        }
        let alpha = self.agent.config.alpha;
        let obs = stack(states)?;
        let act = stack(actions)?;

        let boot: Vec<Vec<f64>> = targets.iter().map(|t| t.bootstrap_state.clone()).collect();
        let boot = stack(&boot)?;
        let (next_actions, next_logp) = self.agent.sample_actions(&boot, rng)?;
        let next_in = SacAgent::critic_input(&boot, &next_actions)?;
        let tq1 = self.agent.q1_target.forward(&next_in)?;
        let tq2 = self.agent.q2_target.forward(&next_in)?;
        let y: Vec<f64> = targets
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let soft = tq1.data()[i].min(tq2.data()[i]) - alpha * next_logp[i];
                t.returns + t.discount * soft
            })
            .collect();
        let y = Tensor2::new(y.len(), 1, y)?;
        let critic_in = SacAgent::critic_input(&obs, &act)?;

        let mut critic_loss = 0.0;
        for (net, opt) in [(&mut self.agent.q1, &mut self.q1_opt), (&mut self.agent.q2, &mut self.q2_opt)] {
            let mut g = Graph::new();
            let bound = net.bind(&mut g)?;
            let x = g.constant(critic_in.clone())?;
            let q = net.forward_graph(&mut g, &bound, x)?;
            let yv = g.constant(y.clone())?;
            let diff = g.sub(q, yv)?;
            let sq = g.square(diff)?;
            let loss = g.mean(sq)?;
            let grads = g.backward(loss)?;
            critic_loss += g.value(loss).item();
            let grads = net.collect_grads(&grads, &bound);
            opt.step(net.params_mut(), &grads)?;
        }

        let (actor_loss, entropy) = self.actor_step(&obs, rng)?;
        polyak_update(&mut self.agent.q1_target, &self.agent.q1, self.agent.config.tau);
        polyak_update(&mut self.agent.q2_target, &self.agent.q2, self.agent.config.tau);
        Ok(SacLosses {
            critic: critic_loss,
            actor: actor_loss,
            entropy,
        })
    }

    fn actor_step<R: Rng + ?Sized>(&mut self, obs: &Tensor2, rng: &mut R) -> Result<(f64, f64)> {
        let agent = &self.agent;
        let (b, d) = (obs.rows(), agent.action_dim);
        let mut g = Graph::new();
        let bound = agent.actor.bind(&mut g)?;
        let x = g.constant(obs.clone())?;
        let out = agent.actor.forward_graph(&mut g, &bound, x)?;
        let mean = g.slice_cols(out, 0, d)?;
        let log_std = g.slice_cols(out, d, 2 * d)?;
        let log_std = g.clamp(log_std, LOG_STD_MIN, LOG_STD_MAX)?;
        let std = g.exp(log_std)?;
        let noise: Vec<f64> = (0..b * d).map(|_| rng.sample(StandardNormal)).collect();
        let gauss_const: f64 = noise.iter().map(|e| -0.5 * e * e).sum::<f64>() / b as f64
            - 0.5 * d as f64 * (2.0 * std::f64::consts::PI).ln();
        let eps = g.constant(Tensor2::new(b, d, noise)?)?;
        let spread = g.mul(std, eps)?;
        let u = g.add(mean, spread)?;
        let a = g.tanh(u)?;

        // log π = Σ (−½ε² − log σ − ½ ln 2π − ln(1 − a² + ε)); the ε terms are constant.
        let a2 = g.square(a)?;
        let one_minus = g.scale(a2, -1.0)?;
        let one_minus = g.add_scalar(one_minus, 1.0 + SQUASH_EPS)?;
        let log_jac = g.ln(one_minus)?;
        let neg = g.add(log_std, log_jac)?;
        let neg_logp = g.sum_cols(neg)?;

        let obs_v = g.constant(obs.clone())?;
        let critic_in = g.concat_cols(obs_v, a)?;
        let c1 = constants(&agent.q1, &mut g)?;
        let q1 = agent.q1.forward_graph(&mut g, &c1, critic_in)?;
        let c2 = constants(&agent.q2, &mut g)?;
        let q2 = agent.q2.forward_graph(&mut g, &c2, critic_in)?;
        let q = g.minimum(q1, q2)?;

        // mean(α log π − Q) = −mean(α·neg_logp + Q) up to the constant.
        let ent = g.scale(neg_logp, agent.config.alpha)?;
        let objective = g.add(ent, q)?;
        let mean_obj = g.mean(objective)?;
        let loss = g.scale(mean_obj, -1.0)?;
        let grads = g.backward(loss)?;
        let loss_value = g.value(loss).item() - agent.config.alpha * gauss_const;
        let entropy = g.value(neg_logp).sum() / b as f64 - gauss_const;

        let grads = self.agent.actor.collect_grads(&grads, &bound);
        self.actor_opt.step(self.agent.actor.params_mut(), &grads)?;
        Ok((loss_value, entropy))
    }
}
