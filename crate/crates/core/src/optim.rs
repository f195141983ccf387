use serde::{Deserialize, Serialize};

use crate::config::OptimizerConfig;
use crate::error::{Error, Result};
use crate::params::ParamVector;

/// Adam with bias-corrected moments, a per-coordinate learning rate and
/// optional global-norm clipping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub config: OptimizerConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    lr: Vec<f64>,
    steps: u64,
}

impl Adam {
    /// Segments whose name starts with `pairing.` use `lr_pairing`.
    pub fn new(config: OptimizerConfig, params: &ParamVector) -> Self {
        let mut lr = vec![config.lr; params.len()];
        for s in params.layout() {
            if s.name.starts_with("pairing.") {
                lr[s.offset..s.offset + s.len].fill(config.lr_pairing);
            }
        }
        Self {
            config,
            m: vec![0.0; params.len()],
            v: vec![0.0; params.len()],
            lr,
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn moments(&self) -> (&[f64], &[f64]) {
        (&self.m, &self.v)
    }

    /// Applies one update in place and returns the gradient norm before clipping.
    pub fn step(&mut self, params: &mut ParamVector, grad: &ParamVector) -> Result<f64> {
        if !params.same_layout(grad) || params.len() != self.m.len() {
            return Err(Error::Config("gradient layout differs from parameters".into()));
        }
        let norm = grad.norm();
        if !norm.is_finite() {
            grad.check_finite()?;
        }
        let c = &self.config;
        let scale = if c.clip_norm > 0.0 && norm > c.clip_norm {
            c.clip_norm / norm
        } else {
            1.0
        };
        self.steps += 1;
        let bc1 = 1.0 - c.beta1.powi(self.steps as i32);
        let bc2 = 1.0 - c.beta2.powi(self.steps as i32);
        let g = grad.values();
        for (i, p) in params.values_mut().iter_mut().enumerate() {
            let gi = g[i] * scale;
            self.m[i] = c.beta1 * self.m[i] + (1.0 - c.beta1) * gi;
            self.v[i] = c.beta2 * self.v[i] + (1.0 - c.beta2) * gi * gi;
            let mh = self.m[i] / bc1;
            let vh = self.v[i] / bc2;
            *p -= self.lr[i] * mh / (vh.sqrt() + c.eps);
        }
        Ok(norm)
    }
}
