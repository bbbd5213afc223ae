//! State-confounded MDPs: a confounder `c_t ∼ P^c_t` is drawn each step and
//! the next state follows `𝒫_t(· | s, a, c)`. Includes nominal and robust
//! evaluation and a max-min solver for the robust optimal policy, where the
//! confounder distribution ranges over a TV ball around `P^c_t`.

use serde::{Deserialize, Serialize};

use crate::error::{Result, RscError};
use crate::lp::solve_matrix_game;
use crate::mdp::{check_labels, check_rewards, FiniteMdp, StochasticPolicy, ValueTables};
use crate::prob::{dot, normalize_distribution};
use crate::robust::{check_radius, tv_worst_case_expectation};

/// Default stopping tolerance of the max-min solver.
pub const SADDLE_TOL: f64 = 1e-9;
/// Default cap on adversary vertices per subproblem.
pub const MAX_VERTICES: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScMdpDoc")]
pub struct ScMdpSpec {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    confounder_size: usize,
    /// `[t][s][a][c][s']`.
    kernels: Vec<Vec<Vec<Vec<Vec<f64>>>>>,
    /// `[t][c]`.
    nominal_confounder: Vec<Vec<f64>>,
    /// `[t][s][a]`.
    rewards: Vec<Vec<Vec<f64>>>,
    state_labels: Option<Vec<Vec<i64>>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScMdpDoc {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    confounder_size: usize,
    kernels: Vec<Vec<Vec<Vec<Vec<f64>>>>>,
    nominal_confounder: Vec<Vec<f64>>,
    rewards: Vec<Vec<Vec<f64>>>,
    #[serde(default)]
    state_labels: Option<Vec<Vec<i64>>>,
    /// Free-form provenance written by tools; ignored.
    #[serde(default, rename = "provenance")]
    _provenance: Option<serde_json::Value>,
}

impl TryFrom<ScMdpDoc> for ScMdpSpec {
    type Error = RscError;

    fn try_from(d: ScMdpDoc) -> Result<Self> {
        ScMdpSpec::new(
            d.num_states,
            d.num_actions,
            d.horizon,
            d.confounder_size,
            d.kernels,
            d.nominal_confounder,
            d.rewards,
            d.state_labels,
        )
    }
}

fn expect_len(len: usize, want: usize, what: impl FnOnce() -> String) -> Result<()> {
    if len != want {
        return Err(RscError::Shape(format!("{} has length {len}, expected {want}", what())));
    }
    Ok(())
}

impl ScMdpSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        confounder_size: usize,
        mut kernels: Vec<Vec<Vec<Vec<Vec<f64>>>>>,
        mut nominal_confounder: Vec<Vec<f64>>,
        rewards: Vec<Vec<Vec<f64>>>,
        state_labels: Option<Vec<Vec<i64>>>,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 || horizon == 0 || confounder_size == 0 {
            return Err(RscError::Invalid("all sizes must be positive".into()));
        }
        expect_len(kernels.len(), horizon, || "kernels".into())?;
        for (t, per_s) in kernels.iter_mut().enumerate() {
            expect_len(per_s.len(), num_states, || format!("kernels[{t}]"))?;
            for (s, per_a) in per_s.iter_mut().enumerate() {
                expect_len(per_a.len(), num_actions, || format!("kernels[{t}][{s}]"))?;
                for (a, per_c) in per_a.iter_mut().enumerate() {
                    expect_len(per_c.len(), confounder_size, || format!("kernels[{t}][{s}][{a}]"))?;
                    for (c, row) in per_c.iter_mut().enumerate() {
                        expect_len(row.len(), num_states, || format!("kernels[{t}][{s}][{a}][{c}]"))?;
                        normalize_distribution(row, &format!("kernel at t={} s={s} a={a} c={c}", t + 1))?;
                    }
                }
            }
        }
        expect_len(nominal_confounder.len(), horizon, || "nominal_confounder".into())?;
        for (t, row) in nominal_confounder.iter_mut().enumerate() {
            expect_len(row.len(), confounder_size, || format!("nominal_confounder[{t}]"))?;
            normalize_distribution(row, &format!("confounder distribution at t={}", t + 1))?;
        }
        check_rewards(&rewards, horizon, num_states, num_actions)?;
        check_labels(&state_labels, num_states)?;
        Ok(Self {
            num_states,
            num_actions,
            horizon,
            confounder_size,
            kernels,
            nominal_confounder,
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

    pub fn confounder_size(&self) -> usize {
        self.confounder_size
    }

    /// `𝒫_t(· | s, a, c)` for 1-based `t`.
    pub fn kernel(&self, t: usize, s: usize, a: usize, c: usize) -> &[f64] {
        &self.kernels[t - 1][s][a][c]
    }

    /// `P^c_t` for 1-based `t`.
    pub fn nominal_confounder(&self, t: usize) -> &[f64] {
        &self.nominal_confounder[t - 1]
    }

    pub fn reward(&self, t: usize, s: usize, a: usize) -> f64 {
        self.rewards[t - 1][s][a]
    }

    pub fn state_labels(&self) -> Option<&[Vec<i64>]> {
        self.state_labels.as_deref()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// `h(c) = 𝒫_t(· | s, a, c) · next` for every confounder value.
    fn continuation(&self, t: usize, s: usize, a: usize, next: &[f64]) -> Vec<f64> {
        self.kernels[t - 1][s][a].iter().map(|row| dot(row, next)).collect()
    }

    fn check_policy(&self, policy: &StochasticPolicy) -> Result<()> {
        policy.check_shape(self.horizon, self.num_states, self.num_actions)
    }
}

/// Joint kernel row over labeled states from independent per-dimension
/// factors: `P(label) = Π_i factors[i](label_i)`, where `factors[i]` lists
/// `(value, probability)` pairs for dimension `i`.
pub fn product_row(labels: &[Vec<i64>], factors: &[Vec<(i64, f64)>]) -> Result<Vec<f64>> {
    let mut row: Vec<f64> = labels
        .iter()
        .map(|label| {
            if label.len() != factors.len() {
                return Err(RscError::Shape(format!(
                    "label of dimension {} for {} factors",
                    label.len(),
                    factors.len()
                )));
            }
            Ok(label
                .iter()
                .zip(factors)
                .map(|(x, f)| f.iter().filter(|(v, _)| v == x).map(|(_, p)| p).sum::<f64>())
                .product())
        })
        .collect::<Result<_>>()?;
    normalize_distribution(&mut row, "product row")?;
    Ok(row)
}

/// Standard MDP with `P_t(· | s, a) = Σ_c P^c_t(c) 𝒫_t(· | s, a, c)`.
pub fn marginalize(spec: &ScMdpSpec) -> Result<FiniteMdp> {
    let transitions = (1..=spec.horizon)
        .map(|t| {
            let pc = spec.nominal_confounder(t);
            (0..spec.num_states)
                .map(|s| {
                    (0..spec.num_actions)
                        .map(|a| {
                            let mut row = vec![0.0; spec.num_states];
                            for (c, &w) in pc.iter().enumerate() {
                                if w == 0.0 {
                                    continue;
                                }
                                for (out, &k) in row.iter_mut().zip(spec.kernel(t, s, a, c)) {
                                    *out += w * k;
                                }
                            }
                            row
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    FiniteMdp::new(
        spec.num_states,
        spec.num_actions,
        spec.horizon,
        transitions,
        spec.rewards.clone(),
        spec.state_labels.clone(),
    )
}

/// SC-value of a policy under the nominal confounder distribution.
pub fn sc_policy_value(spec: &ScMdpSpec, policy: &StochasticPolicy) -> Result<ValueTables> {
    spec.check_policy(policy)?;
    let mut tables = ValueTables::zeros(spec.horizon, spec.num_states, spec.num_actions);
    for t in (1..=spec.horizon).rev() {
        let pc = spec.nominal_confounder(t);
        for s in 0..spec.num_states {
            let mut v = 0.0;
            for a in 0..spec.num_actions {
                let h = spec.continuation(t, s, a, &tables.v[t]);
                let q = spec.reward(t, s, a) + dot(pc, &h);
                tables.q[t - 1][s][a] = q;
                v += policy.prob(t, s, a) * q;
            }
            tables.v[t - 1][s] = v;
        }
    }
    Ok(tables)
}

/// Robust SC-value of a policy. The adversary picks one confounder
/// distribution per `(t, s)` against the policy's action mixture, so
/// `V_t(s) = E_π[r] + min_{P ∈ ball} Σ_c P(c) Σ_a π(a|s) h_a(c)`.
/// `q[t][s][a]` holds the per-action robust backup `r + min_P P·h_a`.
pub fn robust_sc_policy_value(spec: &ScMdpSpec, policy: &StochasticPolicy, sigma: f64) -> Result<ValueTables> {
    check_radius(sigma)?;
    spec.check_policy(policy)?;
    let (ns, na, nc) = (spec.num_states, spec.num_actions, spec.confounder_size);
    let mut tables = ValueTables::zeros(spec.horizon, ns, na);
    for t in (1..=spec.horizon).rev() {
        let pc = spec.nominal_confounder(t);
        for s in 0..ns {
            let mut mean_reward = 0.0;
            let mut g = vec![0.0; nc];
            for a in 0..na {
                let h = spec.continuation(t, s, a, &tables.v[t]);
                let w = policy.prob(t, s, a);
                mean_reward += w * spec.reward(t, s, a);
                for (gc, hc) in g.iter_mut().zip(&h) {
                    *gc += w * hc;
                }
                tables.q[t - 1][s][a] = spec.reward(t, s, a) + tv_worst_case_expectation(pc, &h, sigma)?.value;
            }
            tables.v[t - 1][s] = mean_reward + tv_worst_case_expectation(pc, &g, sigma)?.value;
        }
    }
    Ok(tables)
}

/// Output of [`robust_sc_value_iteration`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RobustScReport {
    pub sigma: f64,
    /// Robust optimal SC-values; `q` holds per-action robust backups.
    pub values: ValueTables,
    pub policy: StochasticPolicy,
    /// Adversary's equilibrium confounder distribution per `[t][s]`.
    pub worst_confounders: Vec<Vec<Vec<f64>>>,
    /// Unilateral-deviation gap at the returned saddle point, per `[t][s]`.
    pub saddle_gaps: Vec<Vec<f64>>,
    pub max_saddle_gap: f64,
    /// Number of adversary vertices generated, per `[t][s]`.
    pub vertices_used: Vec<Vec<usize>>,
}

/// Solution of one max-min subproblem.
#[derive(Debug, Clone)]
pub struct MaxMinSolution {
    pub value: f64,
    pub policy: Vec<f64>,
    pub adversary: Vec<f64>,
    pub saddle_gap: f64,
    pub vertices: usize,
}

/// `max_{π ∈ Δ(A)} min_{P ∈ TvBall(p0, σ)} Σ_a π(a) [rewards[a] + P · h[a]]`
/// by double oracle: the policy side solves a matrix game against the
/// vertices found so far, the adversary side adds its exact best response.
/// Ties prefer the lowest-index pure action.
pub fn solve_max_min(
    rewards: &[f64],
    h: &[Vec<f64>],
    p0: &[f64],
    sigma: f64,
    tol: f64,
    max_vertices: usize,
) -> Result<MaxMinSolution> {
    check_radius(sigma)?;
    let na = rewards.len();
    if na == 0 || h.len() != na {
        return Err(RscError::Shape("one continuation vector per action required".into()));
    }
    let payoff = |a: usize, p: &[f64]| rewards[a] + dot(p, &h[a]);
    let robust_value = |pi: &[f64]| -> Result<(f64, Vec<f64>)> {
        let g: Vec<f64> = (0..p0.len())
            .map(|c| (0..na).map(|a| pi[a] * h[a][c]).sum())
            .collect();
        let mean_r: f64 = pi.iter().zip(rewards).map(|(w, r)| w * r).sum();
        let wc = tv_worst_case_expectation(p0, &g, sigma)?;
        Ok((mean_r + wc.value, wc.worst))
    };

    let mut vertices: Vec<Vec<f64>> = vec![p0.to_vec()];
    loop {
        let matrix: Vec<Vec<f64>> = (0..na)
            .map(|a| vertices.iter().map(|p| payoff(a, p)).collect())
            .collect();
        let game = solve_matrix_game(&matrix)?;
        let pi = game.row_strategy;
        let (lower, response) = robust_value(&pi)?;
        let gap = game.value - lower;
        if gap <= tol {
            let adversary: Vec<f64> = (0..p0.len())
                .map(|c| vertices.iter().zip(&game.col_strategy).map(|(v, y)| y * v[c]).sum())
                .collect();
            let mut policy = pi;
            let mut value = lower;
            for a in 0..na {
                let mut pure = vec![0.0; na];
                pure[a] = 1.0;
                let (v, _) = robust_value(&pure)?;
                if v >= value - 1e-12 {
                    policy = pure;
                    value = v;
                    break;
                }
            }
            let best_reply = (0..na).map(|a| payoff(a, &adversary)).fold(f64::NEG_INFINITY, f64::max);
            return Ok(MaxMinSolution {
                value,
                policy,
                adversary,
                saddle_gap: (best_reply - value).max(0.0),
                vertices: vertices.len(),
            });
        }
        let seen = vertices
            .iter()
            .any(|v| v.iter().zip(&response).all(|(x, y)| (x - y).abs() <= 1e-14));
        if seen || vertices.len() >= max_vertices {
            return Err(RscError::NoConvergence(format!(
                "max-min solver stalled with {} vertices, restricted value {}, policy value {lower}, gap {gap:e}",
                vertices.len(),
                game.value
            )));
        }
        vertices.push(response);
    }
}

/// Robust optimal SC-values and a (possibly stochastic) optimal policy.
pub fn robust_sc_value_iteration(spec: &ScMdpSpec, sigma: f64) -> Result<RobustScReport> {
    check_radius(sigma)?;
    let (horizon, ns, na) = (spec.horizon, spec.num_states, spec.num_actions);
    let mut values = ValueTables::zeros(horizon, ns, na);
    let mut probs = vec![vec![vec![0.0; na]; ns]; horizon];
    let mut worst_confounders = vec![vec![Vec::new(); ns]; horizon];
    let mut saddle_gaps = vec![vec![0.0; ns]; horizon];
    let mut vertices_used = vec![vec![0; ns]; horizon];
    for t in (1..=horizon).rev() {
        let pc = spec.nominal_confounder(t);
        for s in 0..ns {
            let h: Vec<Vec<f64>> = (0..na).map(|a| spec.continuation(t, s, a, &values.v[t])).collect();
            let r: Vec<f64> = (0..na).map(|a| spec.reward(t, s, a)).collect();
            let sol = solve_max_min(&r, &h, pc, sigma, SADDLE_TOL, MAX_VERTICES).map_err(|e| match e {
                RscError::NoConvergence(msg) => RscError::NoConvergence(format!("t={t} s={s}: {msg}")),
                other => other,
            })?;
            for a in 0..na {
                values.q[t - 1][s][a] = r[a] + tv_worst_case_expectation(pc, &h[a], sigma)?.value;
            }
            values.v[t - 1][s] = sol.value;
            probs[t - 1][s] = sol.policy;
            worst_confounders[t - 1][s] = sol.adversary;
            saddle_gaps[t - 1][s] = sol.saddle_gap;
            vertices_used[t - 1][s] = sol.vertices;
        }
    }
    let max_saddle_gap = saddle_gaps.iter().flatten().fold(0.0f64, |m, &g| m.max(g));
    Ok(RobustScReport {
        sigma,
        values,
        policy: StochasticPolicy::new(probs)?,
        worst_confounders,
        saddle_gaps,
        max_saddle_gap,
        vertices_used,
    })
}

/// Random spec with Dirichlet kernels and confounder distributions.
pub fn random_spec<R: rand::Rng + ?Sized>(
    num_states: usize,
    num_actions: usize,
    confounder_size: usize,
    horizon: usize,
    rng: &mut R,
) -> ScMdpSpec {
    use crate::mdp::random_simplex;
    let kernels = (0..horizon)
        .map(|_| {
            (0..num_states)
                .map(|_| {
                    (0..num_actions)
                        .map(|_| (0..confounder_size).map(|_| random_simplex(num_states, rng)).collect())
                        .collect()
                })
                .collect()
        })
        .collect();
    let nominal = (0..horizon).map(|_| random_simplex(confounder_size, rng)).collect();
    let rewards = (0..horizon)
        .map(|_| {
            (0..num_states)
                .map(|_| (0..num_actions).map(|_| rng.random::<f64>()).collect())
                .collect()
        })
        .collect();
    ScMdpSpec::new(num_states, num_actions, horizon, confounder_size, kernels, nominal, rewards, None)
        .expect("random construction is valid")
}
