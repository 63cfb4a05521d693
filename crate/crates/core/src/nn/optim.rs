//! Adam with a linearly annealed learning rate, and global-norm gradient clipping.

use ndarray::Zip;
use serde::{Deserialize, Serialize};

use super::mlp::{Grads, Mlp};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment accumulators for one network. The effective step size is
/// `base_lr * anneal`, where `anneal` only ever decreases.
#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    base_lr: f64,
    anneal: f64,
    step: u64,
    first: Grads,
    second: Grads,
}

impl Adam {
    pub fn new(params: &Mlp, base_lr: f64, config: AdamConfig) -> Self {
        Self {
            config,
            base_lr,
            anneal: 1.0,
            step: 0,
            first: Grads::zeros_like(params),
            second: Grads::zeros_like(params),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn anneal(&self) -> f64 {
        self.anneal
    }

    pub fn learning_rate(&self) -> f64 {
        self.base_lr * self.anneal
    }

    pub fn set_anneal(&mut self, fraction: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::Contract(format!("anneal fraction {fraction} outside [0, 1]")));
        }
        if fraction > self.anneal {
            return Err(Error::Contract(format!(
                "anneal fraction may not increase ({} -> {fraction})",
                self.anneal
            )));
        }
        self.anneal = fraction;
        Ok(())
    }

    /// One bias-corrected Adam update of `params` in the descent direction.
    pub fn step(&mut self, params: &mut Mlp, grads: &Grads) -> Result<()> {
        if !grads.is_finite() {
            return Err(Error::Numeric("gradient contains NaN or infinity".into()));
        }
        let AdamConfig { beta1, beta2, eps } = self.config;
        self.step += 1;
        let t = self.step as i32;
        let lr = self.learning_rate();
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        let update = |p: &mut f64, g: &f64, m: &mut f64, v: &mut f64| {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        };
        for (l, layer) in params.layers_mut().iter_mut().enumerate() {
            Zip::from(&mut layer.weight)
                .and(&grads.weights[l])
                .and(&mut self.first.weights[l])
                .and(&mut self.second.weights[l])
                .for_each(update);
            Zip::from(&mut layer.bias)
                .and(&grads.biases[l])
                .and(&mut self.first.biases[l])
                .and(&mut self.second.biases[l])
                .for_each(update);
        }
        Ok(())
    }
}

/// Scales every gradient in the bundle by `max_norm / norm` when the global L2
/// norm exceeds `max_norm`. Returns the norm before clipping.
pub fn clip_grad_norm(bundle: &mut [&mut Grads], max_norm: f64) -> f64 {
    assert!(max_norm > 0.0, "max_norm must be positive");
    let norm = bundle.iter().map(|g| g.norm_sq()).sum::<f64>().sqrt();
    if norm > max_norm {
        let factor = max_norm / norm;
        for g in bundle.iter_mut() {
            g.scale(factor);
        }
    }
    norm
}

/// Linear schedule `1 - step / total`, clamped to `[0, 1]`.
pub fn anneal_fraction(global_step: u64, total_steps: u64) -> f64 {
    if total_steps == 0 {
        return 0.0;
    }
    (1.0 - global_step as f64 / total_steps as f64).clamp(0.0, 1.0)
}
