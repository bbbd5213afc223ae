//! Two-class Gumbel-Softmax relaxation for binary edge indicators.
//!
//! With logit `φ` for "edge present" and 0 for "absent", the relaxed sample
//! is `σ((φ + L) / τ)` where `L` is standard logistic noise (the difference
//! of two Gumbel variables).

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::{sigmoid, Graph, Var};
use super::tensor::Tensor2;
use crate::error::{Result, RscError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeLogits {
    pub phi: Tensor2,
    tau: f64,
}

impl EdgeLogits {
    pub fn new(phi: Tensor2, tau: f64) -> Result<Self> {
        check_tau(tau)?;
        Ok(Self { phi, tau })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn set_tau(&mut self, tau: f64) -> Result<()> {
        check_tau(tau)?;
        self.tau = tau;
        Ok(())
    }

    /// `σ(φ)`, the marginal edge probability.
    pub fn probabilities(&self) -> Tensor2 {
        self.phi.map(sigmoid)
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(RscError::Invalid(format!("temperature must be positive, got {tau}")));
    }
    Ok(())
}

/// Standard logistic noise `ln u − ln(1 − u)`.
pub fn logistic_noise<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor2 {
    let data = (0..rows * cols)
        .map(|_| {
            let u: f64 = rng.random_range(f64::EPSILON..1.0);
            u.ln() - (-u).ln_1p()
        })
        .collect();
    Tensor2::new(rows, cols, data).expect("shape matches")
}

/// One sample of the whole edge matrix. Soft entries lie in `(0, 1)`;
/// hard entries are the soft sample rounded at ½.
pub fn gumbel_softmax_edge<R: Rng + ?Sized>(logits: &EdgeLogits, rng: &mut R, hard: bool) -> Result<Tensor2> {
    let (r, c) = logits.phi.shape();
    let noise = logistic_noise(r, c, rng);
    Ok(relaxed_edges(&logits.phi, &noise, logits.tau, hard))
}

/// Deterministic part of the sampler for given noise.
pub fn relaxed_edges(phi: &Tensor2, noise: &Tensor2, tau: f64, hard: bool) -> Tensor2 {
    phi.zip_map(noise, |p, l| {
        let y = sigmoid((p + l) / tau);
        if hard {
            if y >= 0.5 {
                1.0
            } else {
                0.0
            }
        } else {
            y
        }
    })
}

/// Recorded sampler: `phi` is a `1 × E` row of logits, `noise` is `B × E`.
/// Returns `B × E` relaxed edges; with `hard`, the forward values are binary
/// and gradients pass straight through the rounding.
pub fn gumbel_edges_graph(g: &mut Graph, phi: Var, noise: &Tensor2, tau: f64, hard: bool) -> Result<Var> {
    check_tau(tau)?;
    let width = g.value(phi).cols();
    if g.value(phi).rows() != 1 || noise.cols() != width {
        return Err(RscError::Shape(format!(
            "logits {:?} with noise {:?}",
            g.value(phi).shape(),
            noise.shape()
        )));
    }
    let tiled = g.tile_rows(phi, noise.rows())?;
    let n = g.constant(noise.clone())?;
    let z = g.add(tiled, n)?;
    let z = g.scale(z, 1.0 / tau)?;
    let y = g.sigmoid(z)?;
    if hard {
        g.straight_through(y)
    } else {
        Ok(y)
    }
}

/// Exponential temperature anneal from `start` to `end` over a run;
/// constant when `start == end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemperatureSchedule {
    pub start: f64,
    pub end: f64,
}

impl Default for TemperatureSchedule {
    fn default() -> Self {
        Self { start: 1.0, end: 1.0 }
    }
}

impl TemperatureSchedule {
    pub fn validate(&self) -> Result<()> {
        check_tau(self.start)?;
        check_tau(self.end)
    }

    /// Temperature at `progress ∈ [0, 1]`.
    pub fn at(&self, progress: f64) -> f64 {
        let p = progress.clamp(0.0, 1.0);
        self.start * (self.end / self.start).powf(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rejects_non_positive_temperature() {
        assert!(EdgeLogits::new(Tensor2::zeros(1, 1), 0.0).is_err());
        assert!(EdgeLogits::new(Tensor2::zeros(1, 1), -1.0).is_err());
    }

    #[test]
    fn symmetric_logit_has_half_mean() {
        let logits = EdgeLogits::new(Tensor2::zeros(1, 1), 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let n = 100_000;
        let mean: f64 = (0..n)
            .map(|_| gumbel_softmax_edge(&logits, &mut rng, false).unwrap().item())
            .sum::<f64>()
            / n as f64;
        assert!((mean - 0.5).abs() < 0.01, "{mean}");
    }

    #[test]
    fn strong_logit_is_almost_always_on() {
        let logits = EdgeLogits::new(Tensor2::filled(1, 1, 10.0), 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 100_000;
        let on = (0..n)
            .filter(|_| gumbel_softmax_edge(&logits, &mut rng, true).unwrap().item() == 1.0)
            .count();
        assert!(on as f64 / n as f64 >= 0.999);
    }

    #[test]
    fn soft_mean_approaches_sigmoid_as_temperature_drops() {
        let phi = 1.2;
        let target = sigmoid(phi);
        let mut errors = Vec::new();
        for tau in [2.0, 1.0, 0.5, 0.1, 0.01] {
            let logits = EdgeLogits::new(Tensor2::filled(1, 1, phi), tau).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(2);
            let n = 100_000;
            let mean: f64 = (0..n)
                .map(|_| gumbel_softmax_edge(&logits, &mut rng, false).unwrap().item())
                .sum::<f64>()
                / n as f64;
            errors.push((mean - target).abs());
        }
        for w in errors.windows(2) {
            assert!(w[1] <= w[0] + 2e-3, "{errors:?}");
        }
        assert!(errors[errors.len() - 1] < 0.01);
    }

    #[test]
    fn schedule_endpoints() {
        let s = TemperatureSchedule { start: 1.0, end: 0.1 };
        assert!((s.at(0.0) - 1.0).abs() < 1e-15);
        assert!((s.at(1.0) - 0.1).abs() < 1e-12);
        assert_eq!(TemperatureSchedule::default().at(0.7), 1.0);
    }
}
