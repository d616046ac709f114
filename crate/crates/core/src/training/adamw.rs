//! AdamW with bias correction and decoupled weight decay.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Moment estimates for a fixed list of parameter tensors.
#[derive(Debug, Clone)]
pub struct AdamW {
    cfg: AdamWConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(cfg: AdamWConfig, shapes: &[usize]) -> Self {
        Self {
            cfg,
            step: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update of every tensor; `lrs[i]` is the learning rate of tensor `i`.
    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: Vec<&[f64]>, lrs: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() || lrs.len() != self.m.len() {
            return Err(Error::DimensionMismatch(format!(
                "optimizer tracks {} tensors, got {} params, {} grads, {} rates",
                self.m.len(),
                params.len(),
                grads.len(),
                lrs.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(&grads).enumerate() {
            if p.len() != self.m[i].len() || g.len() != self.m[i].len() {
                return Err(Error::DimensionMismatch(format!(
                    "tensor {i}: state {} params {} grads {}",
                    self.m[i].len(),
                    p.len(),
                    g.len()
                )));
            }
        }
        self.step += 1;
        let AdamWConfig {
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.cfg;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (((p, g), (m, v)), &lr) in params.into_iter().zip(grads).zip(self.m.iter_mut().zip(&mut self.v)).zip(lrs) {
            for j in 0..p.len() {
                m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
                v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
                if weight_decay != 0.0 {
                    p[j] *= 1.0 - lr * weight_decay;
                }
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                p[j] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let mut opt = AdamW::new(AdamWConfig::default(), &[1]);
        let mut p = [0.0];
        opt.step(vec![&mut p], vec![&[1.0]], &[0.01]).unwrap();
        assert!((p[0] + 0.01 / (1.0 + 1e-8)).abs() < 1e-15, "{}", p[0]);
    }

    #[test]
    fn zero_gradient_without_decay_is_identity() {
        let mut opt = AdamW::new(AdamWConfig::default(), &[3]);
        let mut p = [0.3, -1.2, 7.0];
        for _ in 0..10 {
            opt.step(vec![&mut p], vec![&[0.0; 3]], &[0.1]).unwrap();
        }
        assert_eq!(p, [0.3, -1.2, 7.0]);
    }

    #[test]
    fn decay_is_decoupled() {
        let cfg = AdamWConfig {
            weight_decay: 0.5,
            ..AdamWConfig::default()
        };
        let mut opt = AdamW::new(cfg, &[1]);
        let mut p = [2.0];
        opt.step(vec![&mut p], vec![&[0.0]], &[0.1]).unwrap();
        assert!((p[0] - 2.0 * (1.0 - 0.05)).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut opt = AdamW::new(AdamWConfig::default(), &[2]);
        let mut p = [0.0; 3];
        assert!(opt.step(vec![&mut p], vec![&[0.0; 3]], &[0.1]).is_err());
    }
}
