//! Total-variation uncertainty sets and robust dynamic programming for
//! `(s, a)`-rectangular robust MDPs.

use serde::{Deserialize, Serialize};

use crate::error::{Result, RscError};
use crate::mdp::{FiniteMdp, StochasticPolicy, ValueTables};
use crate::prob::{argmax, argmin, check_distribution, dot, tv_distance};

/// `{P ∈ Δ : ½‖P − center‖₁ ≤ radius}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TvBall {
    center: Vec<f64>,
    radius: f64,
}

impl TvBall {
    pub fn new(center: Vec<f64>, radius: f64) -> Result<Self> {
        check_radius(radius)?;
        check_distribution(&center, "ball center")?;
        Ok(Self { center, radius })
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn contains(&self, p: &[f64], tol: f64) -> bool {
        p.len() == self.center.len()
            && p.iter().all(|&x| x >= -tol)
            && (p.iter().sum::<f64>() - 1.0).abs() <= tol
            && tv_distance(p, &self.center) <= self.radius + tol
    }
}

pub(crate) fn check_radius(sigma: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&sigma) {
        return Err(RscError::Radius(sigma));
    }
    Ok(())
}

/// Minimizer of `P·v` over a TV ball, with the attained value.
#[derive(Debug, Clone, PartialEq)]
pub struct WorstCase {
    pub value: f64,
    pub worst: Vec<f64>,
}

/// Exact `min_{P ∈ TvBall(p0, σ)} P·v` by greedy mass transport: up to `σ`
/// mass is moved from the highest-valued entries onto the lowest-valued one
/// (lowest index among ties).
pub fn tv_worst_case_expectation(p0: &[f64], v: &[f64], sigma: f64) -> Result<WorstCase> {
    check_radius(sigma)?;
    if p0.is_empty() {
        return Err(RscError::Invalid("empty support".into()));
    }
    if p0.len() != v.len() {
        return Err(RscError::Shape(format!(
            "distribution has {} entries, value vector {}",
            p0.len(),
            v.len()
        )));
    }
    if let Some(x) = v.iter().find(|x| !x.is_finite()) {
        return Err(RscError::NonFinite(format!("value entry {x}")));
    }
    check_distribution(p0, "nominal distribution")?;

    let mut worst = p0.to_vec();
    let sink = argmin(v);
    let mut donors: Vec<usize> = (0..v.len())
        .filter(|&j| j != sink && v[j] > v[sink] && p0[j] > 0.0)
        .collect();
    // Highest value first; stable sort keeps lower indices first among ties.
    donors.sort_by(|&a, &b| v[b].total_cmp(&v[a]));
    let mut budget = sigma;
    for j in donors {
        if budget <= 0.0 {
            break;
        }
        let moved = budget.min(worst[j]);
        worst[j] -= moved;
        worst[sink] += moved;
        budget -= moved;
    }
    Ok(WorstCase {
        value: dot(&worst, v),
        worst,
    })
}

/// Output of robust value iteration on an RMDP.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RobustSolveReport {
    pub sigma: f64,
    pub values: ValueTables,
    pub policy: StochasticPolicy,
    /// Worst-case kernel rows attained, `[t][s][a][s']`.
    pub worst_rows: Vec<Vec<Vec<Vec<f64>>>>,
}

impl RobustSolveReport {
    /// Greedy action at `(t, s)` (1-based `t`).
    pub fn action(&self, t: usize, s: usize) -> usize {
        self.policy
            .deterministic_action(t, s)
            .expect("robust value iteration returns deterministic policies")
    }
}

/// Robust backward induction
/// `Q_t(s,a) = r_t(s,a) + min_{P ∈ TvBall(P_t(·|s,a), σ)} P·V_{t+1}` with a
/// greedy deterministic policy (lowest action index among ties).
pub fn robust_value_iteration_rmdp(mdp: &FiniteMdp, sigma: f64) -> Result<RobustSolveReport> {
    check_radius(sigma)?;
    let (horizon, ns, na) = (mdp.horizon(), mdp.num_states(), mdp.num_actions());
    let mut values = ValueTables::zeros(horizon, ns, na);
    let mut actions = vec![vec![0usize; ns]; horizon];
    let mut worst_rows = vec![vec![Vec::with_capacity(na); ns]; horizon];
    for t in (1..=horizon).rev() {
        for s in 0..ns {
            for a in 0..na {
                let wc = tv_worst_case_expectation(mdp.transition(t, s, a), &values.v[t], sigma)?;
                values.q[t - 1][s][a] = mdp.reward(t, s, a) + wc.value;
                worst_rows[t - 1][s].push(wc.worst);
            }
            let best = argmax(&values.q[t - 1][s]);
            actions[t - 1][s] = best;
            values.v[t - 1][s] = values.q[t - 1][s][best];
        }
    }
    Ok(RobustSolveReport {
        sigma,
        values,
        policy: StochasticPolicy::deterministic(&actions, na)?,
        worst_rows,
    })
}

/// Robust value of a fixed policy on an RMDP (same recursion, no max).
pub fn robust_policy_value_rmdp(mdp: &FiniteMdp, policy: &StochasticPolicy, sigma: f64) -> Result<ValueTables> {
    check_radius(sigma)?;
    let (horizon, ns, na) = (mdp.horizon(), mdp.num_states(), mdp.num_actions());
    policy.check_shape(horizon, ns, na)?;
    let mut values = ValueTables::zeros(horizon, ns, na);
    for t in (1..=horizon).rev() {
        for s in 0..ns {
            let mut v = 0.0;
            for a in 0..na {
                let wc = tv_worst_case_expectation(mdp.transition(t, s, a), &values.v[t], sigma)?;
                values.q[t - 1][s][a] = mdp.reward(t, s, a) + wc.value;
                v += policy.prob(t, s, a) * values.q[t - 1][s][a];
            }
            values.v[t - 1][s] = v;
        }
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{optimal_policy, random_mdp, random_simplex};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_radius_is_nominal() {
        let p0 = [0.2, 0.3, 0.5];
        let v = [3.0, -1.0, 2.0];
        let wc = tv_worst_case_expectation(&p0, &v, 0.0).unwrap();
        assert_eq!(wc.worst, p0.to_vec());
        assert_eq!(wc.value, dot(&p0, &v));
    }

    #[test]
    fn two_point_example() {
        let wc = tv_worst_case_expectation(&[0.5, 0.5], &[0.0, 1.0], 0.2).unwrap();
        assert!((wc.value - 0.3).abs() < 1e-15);
        assert!((wc.worst[0] - 0.7).abs() < 1e-15 && (wc.worst[1] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn point_mass_closed_form() {
        let v = [4.0, 1.5, 7.0, 0.5];
        for &sigma in &[0.0, 0.1, 0.5, 1.0] {
            let mut p0 = vec![0.0; 4];
            p0[2] = 1.0;
            let wc = tv_worst_case_expectation(&p0, &v, sigma).unwrap();
            let expected = (1.0 - sigma) * 7.0 + sigma * 0.5;
            assert!((wc.value - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn full_radius_reaches_minimum() {
        let wc = tv_worst_case_expectation(&[0.1, 0.6, 0.3], &[2.0, 5.0, -3.0], 1.0).unwrap();
        assert!((wc.value + 3.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(tv_worst_case_expectation(&[1.0], &[0.0], -0.1), Err(RscError::Radius(_))));
        assert!(matches!(tv_worst_case_expectation(&[1.0], &[0.0], 1.5), Err(RscError::Radius(_))));
        assert!(tv_worst_case_expectation(&[], &[], 0.5).is_err());
        assert!(tv_worst_case_expectation(&[0.5, 0.5], &[1.0], 0.5).is_err());
    }

    #[test]
    fn ties_send_mass_to_lowest_index() {
        let wc = tv_worst_case_expectation(&[0.0, 0.0, 1.0], &[0.0, 0.0, 1.0], 0.4).unwrap();
        assert_eq!(wc.worst, vec![0.4, 0.0, 0.6]);
    }

    #[test]
    fn worst_rows_lie_on_boundary_when_mass_is_available() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..500 {
            let n = rng.random_range(2..7);
            let p0 = random_simplex(n, &mut rng);
            let v: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let sigma = rng.random::<f64>();
            let wc = tv_worst_case_expectation(&p0, &v, sigma).unwrap();
            let ball = TvBall::new(p0.clone(), sigma).unwrap();
            assert!(ball.contains(&wc.worst, 1e-10));
            let vmin = v[argmin(&v)];
            let movable: f64 = (0..n).filter(|&j| v[j] > vmin).map(|j| p0[j]).sum();
            if movable >= sigma {
                assert!((tv_distance(&wc.worst, &p0) - sigma).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_radius_matches_backward_induction() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let mdp = random_mdp(4, 3, 5, &mut rng);
            let robust = robust_value_iteration_rmdp(&mdp, 0.0).unwrap();
            let (policy, values) = optimal_policy(&mdp);
            assert_eq!(robust.values, values);
            assert_eq!(robust.policy, policy);
        }
    }

    #[test]
    fn value_is_monotone_in_radius() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let mdp = random_mdp(5, 2, 4, &mut rng);
            let mut previous: Option<ValueTables> = None;
            for sigma in [0.0, 0.1, 0.3, 0.6, 1.0] {
                let report = robust_value_iteration_rmdp(&mdp, sigma).unwrap();
                if let Some(prev) = &previous {
                    for (a, b) in report.values.v.iter().flatten().zip(prev.v.iter().flatten()) {
                        assert!(*a <= *b + 1e-12);
                    }
                }
                previous = Some(report.values);
            }
        }
    }
}
