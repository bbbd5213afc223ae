//! Replay storage and counterfactual batch augmentation: one state dimension
//! of a record is swapped with the most different value found in the batch,
//! then the transition model regenerates the outcome.

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, RscError};
use crate::scm::ScmModel;

/// Denominator guard in the dimension-swap score.
pub const SWAP_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

impl TransitionRecord {
    pub fn validate(&self) -> Result<()> {
        if self.state.len() != self.next_state.len() {
            return Err(RscError::Shape(format!(
                "state has {} dims, next state {}",
                self.state.len(),
                self.next_state.len()
            )));
        }
        let all = self.state.iter().chain(&self.action).chain(&self.next_state);
        if !self.reward.is_finite() || all.clone().any(|x| !x.is_finite()) {
            return Err(RscError::NonFinite("transition record".into()));
        }
        Ok(())
    }
}

/// Fixed-capacity FIFO of transitions.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    records: Vec<TransitionRecord>,
    next: usize,
    inserted: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(RscError::Invalid("replay capacity must be positive".into()));
        }
        Ok(Self {
            capacity,
            records: Vec::with_capacity(capacity.min(1 << 16)),
            next: 0,
            inserted: 0,
        })
    }

    pub fn push(&mut self, record: TransitionRecord) -> Result<()> {
        record.validate()?;
        if self.records.len() < self.capacity {
            self.records.push(record);
        } else {
            self.records[self.next] = record;
        }
        self.next = (self.next + 1) % self.capacity;
        self.inserted += 1;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn get(&self, index: usize) -> &TransitionRecord {
        &self.records[index]
    }

    /// Oldest to newest.
    pub fn iter_chronological(&self) -> impl Iterator<Item = &TransitionRecord> {
        let start = if self.records.len() < self.capacity { 0 } else { self.next };
        (0..self.records.len()).map(move |i| &self.records[(start + i) % self.records.len()])
    }

    /// Slot of the record inserted right after the one at `index`, if it
    /// is still stored.
    pub fn successor(&self, index: usize) -> Option<usize> {
        let newest = (self.next + self.capacity - 1) % self.capacity;
        if index == newest || index >= self.records.len() {
            return None;
        }
        Some((index + 1) % self.capacity)
    }

    pub fn sample_indices<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Vec<usize>> {
        if self.records.is_empty() {
            return Err(RscError::Invalid("sampling from an empty buffer".into()));
        }
        Ok((0..batch).map(|_| rng.random_range(0..self.records.len())).collect())
    }
}

/// Donor index for swapping dimension `dim` of `states[target]`:
/// `argmax_k (s_t[dim] − s_k[dim])² / (Σ_{j≠dim} (s_t[j] − s_k[j])² + ε)`
/// over `k ≠ target`, lowest index among ties.
pub fn swap_donor(states: &[Vec<f64>], target: usize, dim: usize) -> Result<usize> {
    if states.len() < 2 {
        return Err(RscError::Invalid(format!(
            "need at least two states to swap a dimension, got {}",
            states.len()
        )));
    }
    let base = states
        .get(target)
        .ok_or_else(|| RscError::Invalid(format!("target {target} outside batch of {}", states.len())))?;
    if dim >= base.len() {
        return Err(RscError::Invalid(format!("dimension {dim} of a {}-dim state", base.len())));
    }
    let mut best = None;
    let mut best_score = f64::NEG_INFINITY;
    for (k, s) in states.iter().enumerate() {
        if k == target {
            continue;
        }
        if s.len() != base.len() {
            return Err(RscError::Shape("states differ in dimension".into()));
        }
        let num = (base[dim] - s[dim]).powi(2);
        let den: f64 = (0..base.len())
            .filter(|&j| j != dim)
            .map(|j| (base[j] - s[j]).powi(2))
            .sum::<f64>()
            + SWAP_EPS;
        let score = num / den;
        if score > best_score {
            best_score = score;
            best = Some(k);
        }
    }
    Ok(best.expect("at least one candidate"))
}

/// Picks a dimension uniformly and overwrites it in `states[target]` with the
/// donor's value. Returns the modified state, the dimension and the donor.
pub fn permute_dimension<R: Rng + ?Sized>(
    states: &[Vec<f64>],
    target: usize,
    rng: &mut R,
) -> Result<(Vec<f64>, usize, usize)> {
    let n = states.get(target).map_or(0, Vec::len);
    if n == 0 {
        return Err(RscError::Invalid("target state missing or empty".into()));
    }
    let dim = rng.random_range(0..n);
    let donor = swap_donor(states, target, dim)?;
    let mut out = states[target].clone();
    out[dim] = states[donor][dim];
    Ok((out, dim, donor))
}

fn check_beta(beta: f64) -> Result<()> {
    if !(0.0..=100.0).contains(&beta) {
        return Err(RscError::Invalid(format!("augmentation ratio {beta} outside [0, 100]")));
    }
    Ok(())
}

/// `⌊β% · len⌋`.
pub fn augment_count(beta: f64, len: usize) -> usize {
    (beta * len as f64 / 100.0).floor() as usize
}

#[derive(Debug, Clone)]
pub struct AugmentedBatch {
    pub records: Vec<TransitionRecord>,
    /// Indices of replaced records, ascending.
    pub modified: Vec<usize>,
}

fn select<R: Rng + ?Sized>(len: usize, beta: f64, rng: &mut R) -> Result<Vec<usize>> {
    check_beta(beta)?;
    let count = augment_count(beta, len);
    if count == 0 {
        return Ok(Vec::new());
    }
    let mut chosen = sample(rng, len, count).into_vec();
    chosen.sort_unstable();
    Ok(chosen)
}

/// Replaces `⌊β%⌋` of the batch, chosen without replacement, by
/// counterfactual records: one dimension of `s_t` is swapped, and
/// `(s_{t+1}, r_t)` are regenerated by a hard-graph pass of `scm`.
pub fn augment_batch<R: Rng + ?Sized>(
    batch: &[TransitionRecord],
    beta: f64,
    scm: &ScmModel,
    rng: &mut R,
) -> Result<AugmentedBatch> {
    let chosen = select(batch.len(), beta, rng)?;
    let mut records = batch.to_vec();
    if chosen.is_empty() {
        return Ok(AugmentedBatch { records, modified: chosen });
    }
    let pool: Vec<Vec<f64>> = batch.iter().map(|r| r.state.clone()).collect();
    let mut states = Vec::with_capacity(chosen.len());
    let mut actions = Vec::with_capacity(chosen.len());
    for &idx in &chosen {
        let (s, _, _) = permute_dimension(&pool, idx, rng)?;
        states.push(s);
        actions.push(batch[idx].action.clone());
    }
    let (next, rewards) = scm.predict(&states, &actions, rng, true)?;
    for (j, &idx) in chosen.iter().enumerate() {
        let rec = &mut records[idx];
        rec.state = states[j].clone();
        rec.next_state = next[j].clone();
        rec.reward = rewards[j];
    }
    Ok(AugmentedBatch { records, modified: chosen })
}

/// Additive state noise for the baseline augmenters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum StateNoise {
    Gaussian { std: f64 },
    Uniform { halfwidth: f64 },
}

/// Perturbs `s_t` of `⌊β%⌋` of the records; `s_{t+1}` and `r_t` are left
/// untouched.
pub fn noise_augment<R: Rng + ?Sized>(
    batch: &[TransitionRecord],
    beta: f64,
    noise: StateNoise,
    rng: &mut R,
) -> Result<AugmentedBatch> {
    let chosen = select(batch.len(), beta, rng)?;
    let mut records = batch.to_vec();
    match noise {
        StateNoise::Gaussian { std } => {
            let normal = Normal::new(0.0, std).map_err(|e| RscError::Invalid(format!("gaussian noise: {e}")))?;
            for &i in &chosen {
                for x in records[i].state.iter_mut() {
                    *x += normal.sample(rng);
                }
            }
        }
        StateNoise::Uniform { halfwidth } => {
            if !(halfwidth >= 0.0 && halfwidth.is_finite()) {
                return Err(RscError::Invalid(format!("uniform noise halfwidth {halfwidth}")));
            }
            for &i in &chosen {
                for x in records[i].state.iter_mut() {
                    *x += rng.random_range(-halfwidth..=halfwidth);
                }
            }
        }
    }
    Ok(AugmentedBatch { records, modified: chosen })
}
