use serde::{Deserialize, Serialize};

use super::tensor::Tensor2;
use crate::error::{Result, RscError};

/// First and second moment estimates for Adam.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Tensor2>,
    pub v: Vec<Tensor2>,
}

impl AdamState {
    pub fn new(shapes: &[(usize, usize)]) -> Self {
        Self {
            step: 0,
            m: shapes.iter().map(|&(r, c)| Tensor2::zeros(r, c)).collect(),
            v: shapes.iter().map(|&(r, c)| Tensor2::zeros(r, c)).collect(),
        }
    }
}

fn check_pairs(params: &[&mut Tensor2], grads: &[Tensor2]) -> Result<()> {
    if params.len() != grads.len() {
        return Err(RscError::Shape(format!("{} parameters, {} gradients", params.len(), grads.len())));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() {
            return Err(RscError::Shape(format!("parameter {i}: {:?} vs gradient {:?}", p.shape(), g.shape())));
        }
        g.check_finite("gradient")?;
    }
    Ok(())
}

/// One bias-corrected Adam update.
pub fn adam_step(
    params: Vec<&mut Tensor2>,
    grads: &[Tensor2],
    state: &mut AdamState,
    lr: f64,
    betas: (f64, f64),
    eps: f64,
) -> Result<()> {
    check_pairs(&params, grads)?;
    if state.m.len() != params.len() {
        return Err(RscError::Shape("optimizer state does not match parameters".into()));
    }
    state.step += 1;
    let (b1, b2) = betas;
    let c1 = 1.0 - b1.powi(state.step as i32);
    let c2 = 1.0 - b2.powi(state.step as i32);
    for (i, (p, g)) in params.into_iter().zip(grads).enumerate() {
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (((x, &gr), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = b1 * *mi + (1.0 - b1) * gr;
            *vi = b2 * *vi + (1.0 - b2) * gr * gr;
            *x -= lr * (*mi / c1) / ((*vi / c2).sqrt() + eps);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub betas: (f64, f64),
    pub eps: f64,
    state: AdamState,
}

impl Adam {
    pub fn new(params: &[&Tensor2], lr: f64) -> Self {
        let shapes: Vec<_> = params.iter().map(|p| p.shape()).collect();
        Self {
            lr,
            betas: (0.9, 0.999),
            eps: 1e-8,
            state: AdamState::new(&shapes),
        }
    }

    pub fn step(&mut self, params: Vec<&mut Tensor2>, grads: &[Tensor2]) -> Result<()> {
        adam_step(params, grads, &mut self.state, self.lr, self.betas, self.eps)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Sgd {
    pub lr: f64,
}

impl Sgd {
    pub fn step(&self, params: Vec<&mut Tensor2>, grads: &[Tensor2]) -> Result<()> {
        check_pairs(&params, grads)?;
        for (p, g) in params.into_iter().zip(grads) {
            for (x, d) in p.data_mut().iter_mut().zip(g.data()) {
                *x -= self.lr * d;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_or_rate_leaves_params() {
        let mut p = Tensor2::row(&[1.0, -2.0]);
        let mut adam = Adam::new(&[&p], 0.1);
        adam.step(vec![&mut p], &[Tensor2::zeros(1, 2)]).unwrap();
        assert_eq!(p.data(), &[1.0, -2.0]);
        let mut adam = Adam::new(&[&p], 0.0);
        adam.step(vec![&mut p], &[Tensor2::row(&[3.0, 4.0])]).unwrap();
        assert_eq!(p.data(), &[1.0, -2.0]);
    }

    #[test]
    fn adam_minimizes_scalar_quadratic() {
        // f(x) = (x − 3)²
        let mut p = Tensor2::scalar(-4.0);
        let mut adam = Adam::new(&[&p], 0.05);
        for _ in 0..10_000 {
            let g = Tensor2::scalar(2.0 * (p.item() - 3.0));
            adam.step(vec![&mut p], &[g]).unwrap();
        }
        assert!((p.item() - 3.0).abs() < 1e-6, "{}", p.item());
    }

    #[test]
    fn sgd_step() {
        let mut p = Tensor2::row(&[1.0]);
        Sgd { lr: 0.5 }.step(vec![&mut p], &[Tensor2::row(&[2.0])]).unwrap();
        assert_eq!(p.item(), 0.0);
    }

    #[test]
    fn mismatched_gradients_rejected() {
        let mut p = Tensor2::row(&[1.0]);
        let mut adam = Adam::new(&[&p], 0.1);
        assert!(adam.step(vec![&mut p], &[Tensor2::row(&[1.0, 2.0])]).is_err());
        assert!(adam.step(vec![&mut p], &[Tensor2::row(&[f64::NAN])]).is_err());
    }
}
