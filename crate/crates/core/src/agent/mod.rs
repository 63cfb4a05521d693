//! Actor-critic backbones: hyperparameters, networks, rollout storage,
//! returns and the A2C / PPO objectives.

mod buffer;
mod config;
mod loss;
mod returns;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ask::MetaAction;
use crate::error::Result;
use crate::nn::{softmax, CategoricalDist, Mlp};

pub use buffer::{normalize, RolloutBuffer, Transition};
pub use config::{AcConfig, Backbone};
pub use loss::{a2c_loss, evaluate, ppo_loss, LossSpec, LossStats, NetGrads, PolicyObjective};
pub use returns::{compute_gae, compute_gae_bootstrapped, compute_returns};

#[cfg(test)]
pub(crate) use loss::tests as tests_support;

/// Actor π, critic V and requester g as three separate networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Nets {
    pub actor: Mlp,
    pub critic: Mlp,
    pub requester: Mlp,
}

impl Nets {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, num_actions: usize, hidden: &[usize], rng: &mut R) -> Result<Self> {
        Ok(Self {
            actor: Mlp::new(obs_dim, hidden, num_actions, 0.01, rng)?,
            critic: Mlp::new(obs_dim, hidden, 1, 1.0, rng)?,
            requester: Mlp::new(obs_dim, hidden, MetaAction::COUNT, 0.01, rng)?,
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn num_actions(&self) -> usize {
        self.actor.output_dim()
    }

    pub fn policy(&self, observation: &[f64]) -> Result<CategoricalDist> {
        softmax(&self.actor.forward(observation)?)
    }

    pub fn value(&self, observation: &[f64]) -> Result<f64> {
        Ok(self.critic.forward(observation)?[0])
    }

    pub fn meta_policy(&self, observation: &[f64]) -> Result<CategoricalDist> {
        softmax(&self.requester.forward(observation)?)
    }

    /// Test-time action: argmax of π, no requester.
    pub fn greedy_action(&self, observation: &[f64]) -> Result<usize> {
        Ok(self.policy(observation)?.argmax())
    }
}
