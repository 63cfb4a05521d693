use serde::{Deserialize, Serialize};

use crate::envs::EnvTag;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backbone {
    A2c,
    Ppo,
}

/// Backbone hyperparameters. A2C performs one full-batch step per iteration,
/// so its `epochs` is 1 and `minibatch_size` equals the iteration length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcConfig {
    pub backbone: Backbone,
    pub hidden: Vec<usize>,
    pub timesteps_per_iteration: usize,
    pub learning_rate: f64,
    /// Multiply the learning rate and the PPO clip by `1 - step/total`.
    pub anneal: bool,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_coef: f64,
    pub max_grad_norm: f64,
    pub vf_coef: f64,
    pub ent_coef: f64,
    pub normalize_advantages: bool,
}

impl AcConfig {
    /// Published settings for each backbone and environment family.
    pub fn preset(backbone: Backbone, env: EnvTag) -> Self {
        let (steps, lr, anneal, minibatch) = match (backbone, env) {
            (Backbone::Ppo, EnvTag::CartPole) => (2048, 1e-3, true, 256),
            (Backbone::A2c, EnvTag::CartPole) => (40, 7e-4, true, 40),
            (Backbone::Ppo, EnvTag::DoorKey) => (1024, 2.5e-4, false, 64),
            (Backbone::A2c, EnvTag::DoorKey) => (40, 7e-4, false, 40),
        };
        let ppo = backbone == Backbone::Ppo;
        Self {
            backbone,
            hidden: vec![64, 64],
            timesteps_per_iteration: steps,
            learning_rate: lr,
            anneal,
            epochs: if ppo { 10 } else { 1 },
            minibatch_size: minibatch,
            gamma: 0.99,
            gae_lambda: if ppo { 0.95 } else { 1.0 },
            clip_coef: 0.2,
            max_grad_norm: 0.5,
            vf_coef: 0.5,
            ent_coef: 0.0,
            normalize_advantages: ppo,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("discount factor {} outside [0, 1]", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad(format!("GAE discount {} outside [0, 1]", self.gae_lambda));
        }
        if self.timesteps_per_iteration == 0 || self.epochs == 0 || self.minibatch_size == 0 {
            return bad("iteration length, epochs and minibatch size must be positive".into());
        }
        if self.minibatch_size > self.timesteps_per_iteration {
            return bad(format!(
                "minibatch size {} exceeds timesteps per iteration {}",
                self.minibatch_size, self.timesteps_per_iteration
            ));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden layers must be nonempty and positive".into());
        }
        if !(self.learning_rate > 0.0 && self.max_grad_norm > 0.0) {
            return bad("learning rate and gradient clipping must be positive".into());
        }
        if self.clip_coef < 0.0 || self.vf_coef < 0.0 || self.ent_coef < 0.0 {
            return bad("loss coefficients must be nonnegative".into());
        }
        Ok(())
    }

    /// Minibatches per epoch; a trailing partial minibatch counts as one.
    pub fn num_minibatches(&self) -> usize {
        self.timesteps_per_iteration.div_ceil(self.minibatch_size)
    }
}
