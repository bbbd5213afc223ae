//! Point-mass reaching tasks whose layout is tied to a hidden confounder.
//! The nominal variant samples the confounder one way, the shifted variant
//! the other; dynamics and reward never differ.
//!
//! With probability `correlation_strength` the confounder ties a second
//! feature to the sign of the goal's x coordinate; otherwise that feature is
//! drawn independently.
//!
//! * `toy_compose`: observation `[px, py, gx, m]`, target `(gx, 0)`. The
//!   flag `m ∈ {−1, +1}` sets the direction of horizontal motion, so reaching
//!   the goal needs both `gx` and `m`. Tied means `m` equals the sign of `gx`
//!   (nominal) or its opposite (shifted).
//! * `toy_lift`: observation `[px, py, gx, gy, color]`, target `(gx, gy)`.
//!   Tied means `color` is `+1` exactly when the goal lies in the left half
//!   (nominal), or exactly when it lies in the right half (shifted). Color
//!   is constant and never affects reward.
//!
//! Reward is `clip(1 − ‖p − target‖₁ / REWARD_SCALE, 0, 1)`, scored on the
//! state the action is taken in.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RscError};

/// Distance moved per unit of action.
pub const STEP_SIZE: f64 = 0.2;
/// L1 distance at which the reward reaches zero.
pub const REWARD_SCALE: f64 = 2.0;
/// Goal coordinate magnitude in `toy_lift`.
pub const LIFT_GOAL: f64 = 0.8;
/// Range of the goal's x magnitude in `toy_compose`; drawn independently of
/// its sign.
pub const COMPOSE_GOAL_X: (f64, f64) = (0.5, 0.9);
pub const ACTION_DIM: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvName {
    ToyLift,
    ToyCompose,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Nominal,
    Shifted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyEnvConfig {
    pub env_name: EnvName,
    #[serde(default = "default_variant")]
    pub variant: Variant,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_strength")]
    pub correlation_strength: f64,
}

fn default_variant() -> Variant {
    Variant::Nominal
}

fn default_horizon() -> usize {
    40
}

fn default_strength() -> f64 {
    1.0
}

impl ToyEnvConfig {
    pub fn new(env_name: EnvName) -> Self {
        Self {
            env_name,
            variant: Variant::Nominal,
            horizon: default_horizon(),
            seed: 0,
            correlation_strength: default_strength(),
        }
    }

    pub fn with_variant(&self, variant: Variant) -> Self {
        Self { variant, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(RscError::Invalid("horizon must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.correlation_strength) {
            return Err(RscError::Invalid(format!(
                "correlation strength {} outside [0, 1]",
                self.correlation_strength
            )));
        }
        Ok(())
    }

    pub fn obs_dim(&self) -> usize {
        self.env_name.obs_dim()
    }

    pub fn action_dim(&self) -> usize {
        ACTION_DIM
    }
}

impl EnvName {
    pub fn obs_dim(self) -> usize {
        match self {
            EnvName::ToyCompose => 4,
            EnvName::ToyLift => 5,
        }
    }

    /// Observation indices of the two features tied by the confounder.
    pub fn coupled_dims(self) -> (usize, usize) {
        match self {
            EnvName::ToyCompose => (2, 3),
            EnvName::ToyLift => (2, 4),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvStep {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

#[derive(Debug, Clone)]
pub struct ToyEnv {
    config: ToyEnvConfig,
    state: Vec<f64>,
    t: usize,
}

impl ToyEnv {
    pub fn new(config: ToyEnvConfig) -> Result<Self> {
        config.validate()?;
        let state = vec![0.0; config.obs_dim()];
        Ok(Self { config, state, t: 0 })
    }

    pub fn config(&self) -> &ToyEnvConfig {
        &self.config
    }

    pub fn state(&self) -> &[f64] {
        &self.state
    }

    pub fn elapsed(&self) -> usize {
        self.t
    }

    /// Starts an episode at the origin with a fresh layout. Both variants
    /// consume the same random draws.
    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Vec<f64> {
        let sign = |rng: &mut R| if rng.random::<bool>() { 1.0 } else { -1.0 };
        let sx = sign(rng);
        let coupled = rng.random::<f64>() < self.config.correlation_strength;
        let free = sign(rng);
        let tied = match self.config.variant {
            Variant::Nominal => sx,
            Variant::Shifted => -sx,
        };
        let linked = if coupled { tied } else { free };
        let other = sign(rng);
        let magnitude = rng.random_range(COMPOSE_GOAL_X.0..COMPOSE_GOAL_X.1);
        self.state = match self.config.env_name {
            EnvName::ToyCompose => vec![0.0, 0.0, sx * magnitude, linked],
            // Left half (`sx < 0`) pairs with color +1 in the nominal variant.
            EnvName::ToyLift => vec![0.0, 0.0, sx * LIFT_GOAL, other * LIFT_GOAL, -linked],
        };
        self.t = 0;
        self.state.clone()
    }

    /// Advances one step; actions are clipped to `[-1, 1]`.
    pub fn step(&mut self, action: &[f64]) -> Result<EnvStep> {
        if self.t >= self.config.horizon {
            return Err(RscError::Invalid("episode finished; call reset".into()));
        }
        let (next, reward) = transition(self.config.env_name, &self.state, action)?;
        self.state = next;
        self.t += 1;
        Ok(EnvStep {
            observation: self.state.clone(),
            reward,
            done: self.t >= self.config.horizon,
        })
    }
}

fn clip_action(a: f64) -> f64 {
    if a.is_nan() {
        0.0
    } else {
        a.clamp(-1.0, 1.0)
    }
}

/// Dynamics shared by both variants: `p' = clip(p + STEP_SIZE · clip(a))`,
/// with the x step multiplied by `m` in `toy_compose`. Other coordinates are
/// constant. Returns the next state and the reward of `state`.
pub fn transition(env: EnvName, state: &[f64], action: &[f64]) -> Result<(Vec<f64>, f64)> {
    if state.len() != env.obs_dim() || action.len() != ACTION_DIM {
        return Err(RscError::Shape(format!(
            "state of {} dims and action of {} for an environment taking {} and {ACTION_DIM}",
            state.len(),
            action.len(),
            env.obs_dim()
        )));
    }
    let mut next = state.to_vec();
    let gain = if env == EnvName::ToyCompose { [state[3], 1.0] } else { [1.0, 1.0] };
    for i in 0..2 {
        next[i] = (state[i] + STEP_SIZE * gain[i] * clip_action(action[i])).clamp(-1.0, 1.0);
    }
    Ok((next, reward(env, state)))
}

pub fn target(env: EnvName, state: &[f64]) -> [f64; 2] {
    match env {
        EnvName::ToyCompose => [state[2], 0.0],
        EnvName::ToyLift => [state[2], state[3]],
    }
}

pub fn reward(env: EnvName, state: &[f64]) -> f64 {
    let goal = target(env, state);
    let dist = (state[0] - goal[0]).abs() + (state[1] - goal[1]).abs();
    (1.0 - dist / REWARD_SCALE).clamp(0.0, 1.0)
}

/// Heads for the target at full speed and stops on it.
pub fn scripted_action(env: EnvName, obs: &[f64]) -> Vec<f64> {
    let goal = target(env, obs);
    let gain = if env == EnvName::ToyCompose { obs[3] } else { 1.0 };
    vec![
        (gain * (goal[0] - obs[0]) / STEP_SIZE).clamp(-1.0, 1.0),
        ((goal[1] - obs[1]) / STEP_SIZE).clamp(-1.0, 1.0),
    ]
}

/// Return of one episode divided by the horizon, for a policy given as a
/// closure over observations.
pub fn rollout<R, P>(config: &ToyEnvConfig, mut policy: P, rng: &mut R) -> Result<f64>
where
    R: Rng + ?Sized,
    P: FnMut(&[f64], &mut R) -> Result<Vec<f64>>,
{
    let mut env = ToyEnv::new(config.clone())?;
    let mut obs = env.reset(rng);
    let mut total = 0.0;
    loop {
        let action = policy(&obs, rng)?;
        let step = env.step(&action)?;
        total += step.reward;
        obs = step.observation;
        if step.done {
            break;
        }
    }
    Ok(total / config.horizon as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn reward_is_one_on_goal() {
        let (_, r) = transition(EnvName::ToyLift, &[0.8, -0.8, 0.8, -0.8, 1.0], &[0.0, 0.0]).unwrap();
        assert_eq!(r, 1.0);
        let (_, r) = transition(EnvName::ToyCompose, &[0.6, 0.0, 0.6, 0.3], &[0.0, 0.0]).unwrap();
        assert_eq!(r, 1.0);
    }

    #[test]
    fn actions_are_clipped() {
        let s = [0.0, 0.0, 0.6, 0.5];
        let (a, _) = transition(EnvName::ToyCompose, &s, &[5.0, -7.0]).unwrap();
        let (b, _) = transition(EnvName::ToyCompose, &s, &[1.0, -1.0]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mirror_flag_flips_horizontal_motion() {
        let (next, _) = transition(EnvName::ToyCompose, &[0.0, 0.0, 0.6, -1.0], &[1.0, 0.5]).unwrap();
        assert_eq!(next, vec![-STEP_SIZE, 0.5 * STEP_SIZE, 0.6, -1.0]);
    }

    #[test]
    fn episode_ends_at_horizon() {
        let mut cfg = ToyEnvConfig::new(EnvName::ToyLift);
        cfg.horizon = 3;
        let mut env = ToyEnv::new(cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        env.reset(&mut rng);
        assert!(!env.step(&[0.0, 0.0]).unwrap().done);
        assert!(!env.step(&[0.0, 0.0]).unwrap().done);
        assert!(env.step(&[0.0, 0.0]).unwrap().done);
        assert!(env.step(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn invalid_config_rejected() {
        let mut cfg = ToyEnvConfig::new(EnvName::ToyCompose);
        cfg.correlation_strength = 1.5;
        assert!(ToyEnv::new(cfg).is_err());
    }
}
