//! Sparse linear transition systems with a known causal graph, for checking
//! that the structural model recovers the right edges.

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::augment::TransitionRecord;
use crate::error::{Result, RscError};

/// Outputs are `[s, a] · W + noise`; the last output column is the reward.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearScm {
    n: usize,
    d_a: usize,
    noise_std: f64,
    /// `(n + d_A) × (n + 1)`.
    weights: Vec<Vec<f64>>,
}

impl LinearScm {
    /// Places `round(density · (n + d_A)(n + 1))` edges uniformly, each with
    /// weight magnitude in `[0.5, 1.5)` and a random sign.
    pub fn random<R: Rng + ?Sized>(n: usize, d_a: usize, density: f64, noise_std: f64, rng: &mut R) -> Result<Self> {
        if n == 0 || d_a == 0 {
            return Err(RscError::Invalid("dimensions must be positive".into()));
        }
        if !(0.0..=1.0).contains(&density) || !(noise_std >= 0.0) {
            return Err(RscError::Invalid(format!("density {density}, noise {noise_std}")));
        }
        let (j, k) = (n + d_a, n + 1);
        let count = (density * (j * k) as f64).round() as usize;
        let mut weights = vec![vec![0.0; k]; j];
        for e in sample(rng, j * k, count) {
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            weights[e / k][e % k] = sign * rng.random_range(0.5..1.5);
        }
        Ok(Self {
            n,
            d_a,
            noise_std,
            weights,
        })
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_std * self.noise_std
    }

    /// One transition with state and action drawn uniformly from `[-1, 1]`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> TransitionRecord {
        let noise = Normal::new(0.0, self.noise_std).expect("validated std");
        let state: Vec<f64> = (0..self.n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let action: Vec<f64> = (0..self.d_a).map(|_| rng.random_range(-1.0..1.0)).collect();
        let out: Vec<f64> = (0..=self.n)
            .map(|c| {
                let mean: f64 = state.iter().chain(&action).zip(&self.weights).map(|(x, w)| x * w[c]).sum();
                mean + noise.sample(rng)
            })
            .collect();
        TransitionRecord {
            state,
            action,
            reward: out[self.n],
            next_state: out[..self.n].to_vec(),
            done: false,
        }
    }

    pub fn batch<R: Rng + ?Sized>(&self, size: usize, rng: &mut R) -> Vec<TransitionRecord> {
        (0..size).map(|_| self.sample(rng)).collect()
    }

    pub fn adjacency(&self) -> Vec<Vec<u8>> {
        self.weights
            .iter()
            .map(|row| row.iter().map(|&w| u8::from(w != 0.0)).collect())
            .collect()
    }
}

/// F1 score of a predicted binary adjacency against the truth. Two empty
/// graphs score 1.
pub fn edge_f1(truth: &[Vec<u8>], predicted: &[Vec<u8>]) -> Result<f64> {
    if truth.len() != predicted.len() || truth.iter().zip(predicted).any(|(a, b)| a.len() != b.len()) {
        return Err(RscError::Shape("adjacency shapes differ".into()));
    }
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (&a, &b) in truth.iter().flatten().zip(predicted.iter().flatten()) {
        match (a != 0, b != 0) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            (false, false) => {}
        }
    }
    if tp + fp + fn_ == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * tp as f64 / (2 * tp + fp + fn_) as f64)
}
