//! The four-state separating instance: a robust MDP policy that is optimal
//! against kernel perturbations can be far from optimal once the same
//! dynamics are perturbed through a spurious confounder.
//!
//! States are labeled by two binary dimensions and indexed
//! `[0,0] → 0, [0,1] → 1, [1,0] → 2, [1,1] → 3`.

use serde::{Deserialize, Serialize};

use crate::error::{Result, RscError};
use crate::mdp::FiniteMdp;
use crate::robust::{check_radius, robust_value_iteration_rmdp};
use crate::scmdp::{robust_sc_policy_value, robust_sc_value_iteration, ScMdpSpec};

pub const NUM_STATES: usize = 4;
pub const NUM_ACTIONS: usize = 2;
/// Index of the initial state `[0,0]`.
pub const START: usize = 0;

pub fn state_labels() -> Vec<Vec<i64>> {
    vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]
}

fn check_horizon(horizon: usize) -> Result<()> {
    if horizon < 2 {
        return Err(RscError::Invalid(format!("horizon must be at least 2, got {horizon}")));
    }
    Ok(())
}

fn point_mass(s: usize) -> Vec<f64> {
    let mut row = vec![0.0; NUM_STATES];
    row[s] = 1.0;
    row
}

/// Reward 1 in `[0,0]` and `[1,1]`, 0 elsewhere, for every step and action.
fn rewards(horizon: usize) -> Vec<Vec<Vec<f64>>> {
    let per_step: Vec<Vec<f64>> = (0..NUM_STATES)
        .map(|s| vec![if s == 0 || s == 3 { 1.0 } else { 0.0 }; NUM_ACTIONS])
        .collect();
    vec![per_step; horizon]
}

/// Nominal next state at `t = 1`: action 0 keeps `[0,0]`, action 1 moves to
/// `[0,1]`; every other state is absorbing.
fn nominal_next(s: usize, a: usize) -> usize {
    match (s, a) {
        (0, 0) => 0,
        (0, _) => 1,
        (s, _) => s,
    }
}

/// Next state at `t = 1` when the confounder is active: the first state
/// dimension flips, so `[0,0]` goes to `[1,0]` under action 0 and to
/// `[1,1]` under action 1.
fn confounded_next(s: usize, a: usize) -> usize {
    match (s, a) {
        (0, 0) => 2,
        (0, _) => 3,
        (s, _) => s,
    }
}

pub fn build_standard_mdp(horizon: usize) -> Result<FiniteMdp> {
    check_horizon(horizon)?;
    let transitions = (1..=horizon)
        .map(|t| {
            (0..NUM_STATES)
                .map(|s| {
                    (0..NUM_ACTIONS)
                        .map(|a| point_mass(if t == 1 { nominal_next(s, a) } else { s }))
                        .collect()
                })
                .collect()
        })
        .collect();
    FiniteMdp::new(
        NUM_STATES,
        NUM_ACTIONS,
        horizon,
        transitions,
        rewards(horizon),
        Some(state_labels()),
    )
}

/// Same dynamics written as an SC-MDP with a binary confounder whose nominal
/// law is a point mass on `c = 0`.
pub fn build_rsc_mdp(horizon: usize) -> Result<ScMdpSpec> {
    check_horizon(horizon)?;
    let kernels = (1..=horizon)
        .map(|t| {
            (0..NUM_STATES)
                .map(|s| {
                    (0..NUM_ACTIONS)
                        .map(|a| {
                            if t == 1 {
                                vec![point_mass(nominal_next(s, a)), point_mass(confounded_next(s, a))]
                            } else {
                                vec![point_mass(s), point_mass(s)]
                            }
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    ScMdpSpec::new(
        NUM_STATES,
        NUM_ACTIONS,
        horizon,
        2,
        kernels,
        vec![vec![1.0, 0.0]; horizon],
        rewards(horizon),
        Some(state_labels()),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem2Report {
    #[serde(rename = "T")]
    pub horizon: usize,
    pub sigma1: f64,
    pub sigma2: f64,
    /// Robust SC-value of the robust SC-optimal policy from `[0,0]`.
    #[serde(rename = "V_rsc_star")]
    pub v_rsc_star: f64,
    /// Robust SC-value of the robust-MDP-optimal policy from `[0,0]`.
    #[serde(rename = "V_rmdp_policy")]
    pub v_rmdp_policy: f64,
    pub gap: f64,
    pub bound: f64,
    pub holds: bool,
    /// Action taken by the robust-MDP policy in `[0,0]` at `t = 1`.
    pub rmdp_action: usize,
    /// Robust SC-optimal action distribution in `[0,0]` at `t = 1`.
    pub rsc_policy: Vec<f64>,
}

/// Absolute slack allowed when comparing the gap against `T/8`; at `T = 2`,
/// `σ₂ = ¾` the two coincide exactly.
pub const BOUND_SLACK: f64 = 1e-9;

/// Solves both robust problems on the hard instance and compares their
/// policies under the confounder-robust objective.
pub fn verify_theorem2(horizon: usize, sigma1: f64, sigma2: f64) -> Result<Theorem2Report> {
    check_horizon(horizon)?;
    check_radius(sigma1)?;
    if !(sigma2 > 0.5 && sigma2 <= 1.0) {
        return Err(RscError::Radius(sigma2));
    }
    let mdp = build_standard_mdp(horizon)?;
    let spec = build_rsc_mdp(horizon)?;
    let rmdp = robust_value_iteration_rmdp(&mdp, sigma1)?;
    let rsc = robust_sc_value_iteration(&spec, sigma2)?;
    let v_rsc_star = rsc.values.value(1, START);
    let v_rmdp_policy = robust_sc_policy_value(&spec, &rmdp.policy, sigma2)?.value(1, START);
    let gap = v_rsc_star - v_rmdp_policy;
    let bound = horizon as f64 / 8.0;
    Ok(Theorem2Report {
        horizon,
        sigma1,
        sigma2,
        v_rsc_star,
        v_rmdp_policy,
        gap,
        bound,
        holds: gap >= bound - BOUND_SLACK,
        rmdp_action: rmdp.action(1, START),
        rsc_policy: rsc.policy.row(1, START).to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scmdp::marginalize;

    #[test]
    fn short_horizon_rejected() {
        assert!(build_standard_mdp(1).is_err());
        assert!(build_rsc_mdp(0).is_err());
        assert!(verify_theorem2(1, 0.5, 1.0).is_err());
    }

    #[test]
    fn structure() {
        let mdp = build_standard_mdp(2).unwrap();
        assert_eq!(mdp.transition(1, 0, 1), &[0.0, 1.0, 0.0, 0.0]);
        for s in 1..4 {
            for a in 0..2 {
                assert_eq!(mdp.transition(1, s, a)[s], 1.0);
            }
        }
        assert_eq!(mdp.reward(1, 2, 0), 0.0);
        assert_eq!(mdp.reward(2, 2, 1), 0.0);
        let spec = build_rsc_mdp(3).unwrap();
        assert_eq!(spec.kernel(1, 0, 1, 1)[3], 1.0);
        for t in 2..=3 {
            for s in 0..4 {
                assert_eq!(spec.kernel(t, s, 0, 1)[s], 1.0);
            }
        }
        assert_eq!(marginalize(&spec).unwrap(), build_standard_mdp(3).unwrap());
    }

    #[test]
    fn sigma2_range() {
        assert!(verify_theorem2(10, 0.3, 0.5).is_err());
        assert!(verify_theorem2(10, 1.2, 1.0).is_err());
        assert!(verify_theorem2(10, 0.3, 1.0).is_ok());
    }
}
