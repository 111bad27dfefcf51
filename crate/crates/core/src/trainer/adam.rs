use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Adam hyperparameters and the number of full-gradient steps to take.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub steps: usize,
}

impl AdamConfig {
    pub fn new(lr: f64, beta1: f64, beta2: f64, eps: f64, steps: usize) -> Result<Self> {
        let cfg = Self { lr, beta1, beta2, eps, steps };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `lr = 5e-2`, 5000 steps.
    pub fn toy() -> Self {
        Self { lr: 5e-2, beta1: 0.9, beta2: 0.999, eps: 1e-8, steps: 5000 }
    }

    /// `lr = 0.1`, 5000 steps.
    pub fn simplex() -> Self {
        Self { lr: 0.1, ..Self::toy() }
    }

    /// `lr = 5e-2`, 2000 steps.
    pub fn tabular() -> Self {
        Self { steps: 2000, ..Self::toy() }
    }

    pub fn with_lr(self, lr: f64) -> Self {
        Self { lr, ..self }
    }

    pub fn with_steps(self, steps: usize) -> Self {
        Self { steps, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidParameter(format!("lr must be positive, got {}", self.lr)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::InvalidParameter(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::InvalidParameter(format!("eps must be positive, got {}", self.eps)));
        }
        if self.steps == 0 {
            return Err(Error::InvalidParameter("steps must be positive".into()));
        }
        Ok(())
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self::toy()
    }
}

/// Bias-corrected Adam state for a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(cfg: AdamConfig, dim: usize) -> Self {
        Self { cfg, m: vec![0.0; dim], v: vec![0.0; dim], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        debug_assert_eq!(params.len(), grad.len());
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps, .. } = self.cfg;
        let c1 = 1.0 - beta1.powi(self.t);
        let c2 = 1.0 - beta2.powi(self.t);
        for ((x, g), (m, v)) in params.iter_mut().zip(grad).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            *x -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_a_quadratic() {
        let mut x = vec![3.0, -2.0];
        let mut opt = Adam::new(AdamConfig::toy().with_steps(1), 2);
        for _ in 0..3000 {
            let g: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
            opt.step(&mut x, &g);
        }
        assert!(x.iter().all(|v| v.abs() < 1e-3), "{x:?}");
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut x = vec![0.0];
        Adam::new(AdamConfig::toy(), 1).step(&mut x, &[7.0]);
        assert!((x[0] + 5e-2).abs() < 1e-9);
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut x = vec![1.5, -0.5];
        let mut opt = Adam::new(AdamConfig::toy(), 2);
        for _ in 0..10 {
            opt.step(&mut x, &[0.0, 0.0]);
        }
        assert_eq!(x, vec![1.5, -0.5]);
    }

    #[test]
    fn validation() {
        assert!(AdamConfig::new(0.0, 0.9, 0.999, 1e-8, 10).is_err());
        assert!(AdamConfig::new(0.1, 1.0, 0.999, 1e-8, 10).is_err());
        assert!(AdamConfig::new(0.1, 0.9, 0.999, 0.0, 10).is_err());
        assert!(AdamConfig::new(0.1, 0.9, 0.999, 1e-8, 0).is_err());
        assert!(AdamConfig::new(0.1, 0.9, 0.999, 1e-8, 10).is_ok());
    }
}
