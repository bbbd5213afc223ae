//! Finite-horizon tabular MDPs: representation, policy evaluation and
//! backward induction.
//!
//! Time steps are 1-based throughout the public API (`t ∈ 1..=T`), and the
//! terminal value table `V_{T+1} ≡ 0` is stored explicitly.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RscError};
use crate::prob::{dot, normalize_distribution};

/// Episodic tabular MDP with per-step kernels `P_t(s' | s, a)` and rewards
/// `r_t(s, a) ∈ [0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FiniteMdpDoc")]
pub struct FiniteMdp {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    /// `[t][s][a][s']`, `t` 0-based internally.
    transitions: Vec<Vec<Vec<Vec<f64>>>>,
    /// `[t][s][a]`.
    rewards: Vec<Vec<Vec<f64>>>,
    state_labels: Option<Vec<Vec<i64>>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FiniteMdpDoc {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    transitions: Vec<Vec<Vec<Vec<f64>>>>,
    rewards: Vec<Vec<Vec<f64>>>,
    #[serde(default)]
    state_labels: Option<Vec<Vec<i64>>>,
    /// Free-form provenance written by tools; ignored.
    #[serde(default, rename = "provenance")]
    _provenance: Option<serde_json::Value>,
}

impl TryFrom<FiniteMdpDoc> for FiniteMdp {
    type Error = RscError;

    fn try_from(doc: FiniteMdpDoc) -> Result<Self> {
        FiniteMdp::new(
            doc.num_states,
            doc.num_actions,
            doc.horizon,
            doc.transitions,
            doc.rewards,
            doc.state_labels,
        )
    }
}

pub(crate) fn check_rewards(
    rewards: &[Vec<Vec<f64>>],
    horizon: usize,
    num_states: usize,
    num_actions: usize,
) -> Result<()> {
    if rewards.len() != horizon {
        return Err(RscError::Shape(format!(
            "rewards cover {} steps, horizon is {horizon}",
            rewards.len()
        )));
    }
    for (t, per_state) in rewards.iter().enumerate() {
        if per_state.len() != num_states {
            return Err(RscError::Shape(format!("rewards[{t}] has {} states", per_state.len())));
        }
        for (s, per_action) in per_state.iter().enumerate() {
            if per_action.len() != num_actions {
                return Err(RscError::Shape(format!(
                    "rewards[{t}][{s}] has {} actions",
                    per_action.len()
                )));
            }
            for &r in per_action {
                if !(0.0..=1.0).contains(&r) {
                    return Err(RscError::Invalid(format!(
                        "reward {r} at t={} s={s} outside [0, 1]",
                        t + 1
                    )));
                }
            }
        }
    }
    Ok(())
}

pub(crate) fn check_labels(labels: &Option<Vec<Vec<i64>>>, num_states: usize) -> Result<()> {
    if let Some(labels) = labels {
        if labels.len() != num_states {
            return Err(RscError::Shape(format!(
                "{} state labels for {num_states} states",
                labels.len()
            )));
        }
        if let Some(first) = labels.first() {
            if labels.iter().any(|l| l.len() != first.len()) {
                return Err(RscError::Shape("state labels differ in dimension".into()));
            }
        }
    }
    Ok(())
}

impl FiniteMdp {
    pub fn new(
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        mut transitions: Vec<Vec<Vec<Vec<f64>>>>,
        rewards: Vec<Vec<Vec<f64>>>,
        state_labels: Option<Vec<Vec<i64>>>,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 || horizon == 0 {
            return Err(RscError::Invalid(
                "num_states, num_actions and horizon must be positive".into(),
            ));
        }
        if transitions.len() != horizon {
            return Err(RscError::Shape(format!(
                "transitions cover {} steps, horizon is {horizon}",
                transitions.len()
            )));
        }
        for (t, per_state) in transitions.iter_mut().enumerate() {
            if per_state.len() != num_states {
                return Err(RscError::Shape(format!(
                    "transitions[{t}] has {} states",
                    per_state.len()
                )));
            }
            for (s, per_action) in per_state.iter_mut().enumerate() {
                if per_action.len() != num_actions {
                    return Err(RscError::Shape(format!(
                        "transitions[{t}][{s}] has {} actions",
                        per_action.len()
                    )));
                }
                for (a, row) in per_action.iter_mut().enumerate() {
                    if row.len() != num_states {
                        return Err(RscError::Shape(format!(
                            "transitions[{t}][{s}][{a}] has length {}",
                            row.len()
                        )));
                    }
                    normalize_distribution(row, &format!("P_{}({s},{a})", t + 1))?;
                }
            }
        }
        check_rewards(&rewards, horizon, num_states, num_actions)?;
        check_labels(&state_labels, num_states)?;
        Ok(Self {
            num_states,
            num_actions,
            horizon,
            transitions,
            rewards,
            state_labels,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// `P_t(· | s, a)` for 1-based `t`.
    pub fn transition(&self, t: usize, s: usize, a: usize) -> &[f64] {
        &self.transitions[t - 1][s][a]
    }

    /// `r_t(s, a)` for 1-based `t`.
    pub fn reward(&self, t: usize, s: usize, a: usize) -> f64 {
        self.rewards[t - 1][s][a]
    }

    pub fn state_labels(&self) -> Option<&[Vec<i64>]> {
        self.state_labels.as_deref()
    }

    /// Looks a state up by its label.
    pub fn state_index(&self, label: &[i64]) -> Option<usize> {
        self.state_labels.as_ref()?.iter().position(|l| l == label)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Non-stationary stochastic policy `π_t(a | s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StochasticPolicy {
    /// `[t][s][a]`, `t` 0-based internally.
    probs: Vec<Vec<Vec<f64>>>,
}

impl StochasticPolicy {
    pub fn new(mut probs: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        if probs.is_empty() {
            return Err(RscError::Shape("policy has no time steps".into()));
        }
        let num_states = probs[0].len();
        let num_actions = probs[0].first().map_or(0, Vec::len);
        if num_states == 0 || num_actions == 0 {
            return Err(RscError::Shape("policy has no states or actions".into()));
        }
        for (t, per_state) in probs.iter_mut().enumerate() {
            if per_state.len() != num_states {
                return Err(RscError::Shape(format!("policy step {} is ragged", t + 1)));
            }
            for (s, row) in per_state.iter_mut().enumerate() {
                if row.len() != num_actions {
                    return Err(RscError::Shape(format!("policy row ({}, {s}) is ragged", t + 1)));
                }
                normalize_distribution(row, &format!("pi_{}(.|{s})", t + 1))?;
            }
        }
        Ok(Self { probs })
    }

    /// Deterministic policy from an action table `[t][s]`.
    pub fn deterministic(actions: &[Vec<usize>], num_actions: usize) -> Result<Self> {
        let probs = actions
            .iter()
            .map(|per_state| {
                per_state
                    .iter()
                    .map(|&a| {
                        if a >= num_actions {
                            return Err(RscError::Invalid(format!("action {a} out of range")));
                        }
                        let mut row = vec![0.0; num_actions];
                        row[a] = 1.0;
                        Ok(row)
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(probs)
    }

    pub fn uniform(horizon: usize, num_states: usize, num_actions: usize) -> Self {
        let row = vec![1.0 / num_actions as f64; num_actions];
        Self {
            probs: vec![vec![row; num_states]; horizon],
        }
    }

    /// Random policy with each row drawn from a flat Dirichlet.
    pub fn random<R: Rng + ?Sized>(
        horizon: usize,
        num_states: usize,
        num_actions: usize,
        rng: &mut R,
    ) -> Self {
        let probs = (0..horizon)
            .map(|_| {
                (0..num_states)
                    .map(|_| {
                        let raw: Vec<f64> = (0..num_actions)
                            .map(|_| -(1.0 - rng.random::<f64>()).ln())
                            .collect();
                        let total: f64 = raw.iter().sum();
                        raw.into_iter().map(|x| x / total).collect()
                    })
                    .collect()
            })
            .collect();
        Self { probs }
    }

    pub fn horizon(&self) -> usize {
        self.probs.len()
    }

    pub fn num_states(&self) -> usize {
        self.probs[0].len()
    }

    pub fn num_actions(&self) -> usize {
        self.probs[0][0].len()
    }

    /// `π_t(· | s)` for 1-based `t`.
    pub fn row(&self, t: usize, s: usize) -> &[f64] {
        &self.probs[t - 1][s]
    }

    pub fn prob(&self, t: usize, s: usize, a: usize) -> f64 {
        self.probs[t - 1][s][a]
    }

    /// Replaces one row; used to build policies that differ in a single decision.
    pub fn set_row(&mut self, t: usize, s: usize, mut row: Vec<f64>) -> Result<()> {
        if row.len() != self.num_actions() {
            return Err(RscError::Shape("policy row length".into()));
        }
        normalize_distribution(&mut row, "policy row")?;
        self.probs[t - 1][s] = row;
        Ok(())
    }

    /// The action chosen with probability one at `(t, s)`, if any.
    pub fn deterministic_action(&self, t: usize, s: usize) -> Option<usize> {
        self.row(t, s).iter().position(|&p| p == 1.0)
    }

    pub fn is_deterministic(&self) -> bool {
        self.probs
            .iter()
            .flatten()
            .all(|row| row.iter().all(|&p| p == 0.0 || p == 1.0))
    }

    /// Mixture `w·self + (1 − w)·other`, row by row.
    pub fn mix(&self, other: &Self, w: f64) -> Result<Self> {
        if self.horizon() != other.horizon()
            || self.num_states() != other.num_states()
            || self.num_actions() != other.num_actions()
        {
            return Err(RscError::Shape("mixing policies of different shapes".into()));
        }
        let probs = self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| {
                a.iter()
                    .zip(b)
                    .map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| w * x + (1.0 - w) * y).collect())
                    .collect()
            })
            .collect();
        Self::new(probs)
    }

    pub(crate) fn check_shape(&self, horizon: usize, num_states: usize, num_actions: usize) -> Result<()> {
        if self.horizon() != horizon || self.num_states() != num_states || self.num_actions() != num_actions {
            return Err(RscError::Shape(format!(
                "policy is {}x{}x{}, model is {horizon}x{num_states}x{num_actions}",
                self.horizon(),
                self.num_states(),
                self.num_actions()
            )));
        }
        Ok(())
    }
}

/// Value and action-value tables for `t = 1..=T+1` (`V_{T+1} ≡ 0`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueTables {
    /// `[t][s]` with `T + 1` rows; the last row is the terminal zero row.
    pub v: Vec<Vec<f64>>,
    /// `[t][s][a]` with `T` rows.
    pub q: Vec<Vec<Vec<f64>>>,
}

impl ValueTables {
    pub(crate) fn zeros(horizon: usize, num_states: usize, num_actions: usize) -> Self {
        Self {
            v: vec![vec![0.0; num_states]; horizon + 1],
            q: vec![vec![vec![0.0; num_actions]; num_states]; horizon],
        }
    }

    pub fn horizon(&self) -> usize {
        self.q.len()
    }

    /// `V_t(s)` for 1-based `t ∈ 1..=T+1`.
    pub fn value(&self, t: usize, s: usize) -> f64 {
        self.v[t - 1][s]
    }

    /// `Q_t(s, a)` for 1-based `t ∈ 1..=T`.
    pub fn q_value(&self, t: usize, s: usize, a: usize) -> f64 {
        self.q[t - 1][s][a]
    }

    /// Row `V_t` for 1-based `t`.
    pub fn values_at(&self, t: usize) -> &[f64] {
        &self.v[t - 1]
    }
}

/// Exact evaluation of a (stochastic, non-stationary) policy by backward
/// recursion.
pub fn evaluate_policy(mdp: &FiniteMdp, policy: &StochasticPolicy) -> Result<ValueTables> {
    policy.check_shape(mdp.horizon, mdp.num_states, mdp.num_actions)?;
    let mut tables = ValueTables::zeros(mdp.horizon, mdp.num_states, mdp.num_actions);
    for t in (1..=mdp.horizon).rev() {
        let (head, tail) = tables.v.split_at_mut(t);
        let next = &tail[0];
        let current = &mut head[t - 1];
        for s in 0..mdp.num_states {
            let mut value = 0.0;
            for a in 0..mdp.num_actions {
                let q = mdp.reward(t, s, a) + dot(mdp.transition(t, s, a), next);
                tables.q[t - 1][s][a] = q;
                value += policy.prob(t, s, a) * q;
            }
            current[s] = value;
        }
    }
    Ok(tables)
}

/// Backward induction. The returned policy is deterministic; ties go to the
/// lowest action index.
pub fn optimal_policy(mdp: &FiniteMdp) -> (StochasticPolicy, ValueTables) {
    let mut tables = ValueTables::zeros(mdp.horizon, mdp.num_states, mdp.num_actions);
    let mut actions = vec![vec![0usize; mdp.num_states]; mdp.horizon];
    for t in (1..=mdp.horizon).rev() {
        for s in 0..mdp.num_states {
            for a in 0..mdp.num_actions {
                tables.q[t - 1][s][a] = mdp.reward(t, s, a) + dot(mdp.transition(t, s, a), &tables.v[t]);
            }
            let best = crate::prob::argmax(&tables.q[t - 1][s]);
            actions[t - 1][s] = best;
            tables.v[t - 1][s] = tables.q[t - 1][s][best];
        }
    }
    let policy = StochasticPolicy::deterministic(&actions, mdp.num_actions)
        .expect("greedy actions are in range");
    (policy, tables)
}

/// A random MDP with Dirichlet rows and uniform rewards; handy for tests and
/// randomized checks.
pub fn random_mdp<R: Rng + ?Sized>(
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    rng: &mut R,
) -> FiniteMdp {
    let transitions = (0..horizon)
        .map(|_| {
            (0..num_states)
                .map(|_| (0..num_actions).map(|_| random_simplex(num_states, rng)).collect())
                .collect()
        })
        .collect();
    let rewards = (0..horizon)
        .map(|_| {
            (0..num_states)
                .map(|_| (0..num_actions).map(|_| rng.random::<f64>()).collect())
                .collect()
        })
        .collect();
    FiniteMdp::new(num_states, num_actions, horizon, transitions, rewards, None)
        .expect("random construction is valid")
}

/// Point drawn uniformly from the probability simplex of dimension `n`.
pub fn random_simplex<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single_state(horizon: usize) -> FiniteMdp {
        FiniteMdp::new(
            1,
            1,
            horizon,
            vec![vec![vec![vec![1.0]]]; horizon],
            vec![vec![vec![1.0]]; horizon],
            None,
        )
        .unwrap()
    }

    #[test]
    fn constant_reward_accumulates() {
        let mdp = single_state(5);
        let v = evaluate_policy(&mdp, &StochasticPolicy::uniform(5, 1, 1)).unwrap();
        assert_eq!(v.value(1, 0), 5.0);
        assert_eq!(v.value(6, 0), 0.0);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mdp = single_state(5);
        let err = evaluate_policy(&mdp, &StochasticPolicy::uniform(4, 1, 1)).unwrap_err();
        assert!(matches!(err, RscError::Shape(_)));
    }

    #[test]
    fn invalid_construction_rejected() {
        // Row mass far from one.
        assert!(FiniteMdp::new(1, 1, 1, vec![vec![vec![vec![0.9]]]], vec![vec![vec![0.0]]], None).is_err());
        // Reward out of range.
        assert!(FiniteMdp::new(1, 1, 1, vec![vec![vec![vec![1.0]]]], vec![vec![vec![1.5]]], None).is_err());
        // Missing time step.
        assert!(FiniteMdp::new(1, 1, 2, vec![vec![vec![vec![1.0]]]], vec![vec![vec![0.0]]; 2], None).is_err());
    }

    #[test]
    fn ties_resolve_to_lowest_action() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let base = random_mdp(3, 3, 4, &mut rng);
        // Same kernel for every action and constant rewards.
        let transitions = (1..=4)
            .map(|t| (0..3).map(|s| vec![base.transition(t, s, 0).to_vec(); 3]).collect())
            .collect();
        let mdp = FiniteMdp::new(3, 3, 4, transitions, vec![vec![vec![0.5; 3]; 3]; 4], None).unwrap();
        let (policy, _) = optimal_policy(&mdp);
        for t in 1..=4 {
            for s in 0..3 {
                assert_eq!(policy.deterministic_action(t, s), Some(0));
            }
        }
    }

    #[test]
    fn optimal_value_is_self_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let mdp = random_mdp(4, 3, 5, &mut rng);
            let (policy, star) = optimal_policy(&mdp);
            assert!(policy.is_deterministic());
            let eval = evaluate_policy(&mdp, &policy).unwrap();
            for t in 1..=6 {
                for s in 0..4 {
                    assert!((eval.value(t, s) - star.value(t, s)).abs() <= 1e-12);
                    assert!(star.value(t, s) >= 0.0);
                    assert!(star.value(t, s) <= (6 - t) as f64 + 1e-12);
                }
            }
        }
    }

    #[test]
    fn json_round_trip_and_unknown_keys() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mdp = random_mdp(2, 2, 3, &mut rng);
        let back = FiniteMdp::from_json(&mdp.to_json().unwrap()).unwrap();
        assert_eq!(mdp, back);
        let bad = r#"{"num_states":1,"num_actions":1,"horizon":1,"transitions":[[[[1.0]]]],"rewards":[[[0.0]]],"extra":1}"#;
        assert!(FiniteMdp::from_json(bad).is_err());
    }
}
