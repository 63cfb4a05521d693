use ndarray::Array2;

use super::returns::{compute_gae, compute_returns};
use crate::ask::MetaAction;
use crate::error::{ensure_finite, Error, Result};

/// One environment step as seen by the learner.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub observation: Vec<f64>,
    pub meta: MetaAction,
    pub action: usize,
    /// Advisor action for this state, when one was obtained.
    pub label: Option<usize>,
    /// `log g(y|s)` at collection time; 0 when no requester is in use.
    pub logp_meta: f64,
    /// `log π(a|s)` at collection time; 0 on advisor-executed steps.
    pub logp_action: f64,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
    pub value: f64,
    pub next_value: f64,
}

/// Steps of one iteration, episodes concatenated.
#[derive(Debug, Clone, Default)]
pub struct RolloutBuffer {
    obs_dim: usize,
    observations: Vec<f64>,
    pub meta: Vec<MetaAction>,
    pub actions: Vec<usize>,
    pub labels: Vec<Option<usize>>,
    pub logp_meta: Vec<f64>,
    pub logp_action: Vec<f64>,
    pub rewards: Vec<f64>,
    pub terminated: Vec<bool>,
    pub episode_end: Vec<bool>,
    pub values: Vec<f64>,
    pub next_values: Vec<f64>,
    pub returns: Vec<f64>,
    pub advantages: Vec<f64>,
    /// Steps picked by the state selector this iteration.
    pub unstable: Vec<bool>,
    /// Whether the requester chose `meta`, so its log-probability is part of the policy.
    pub uses_requester: bool,
}

impl RolloutBuffer {
    pub fn new(obs_dim: usize, uses_requester: bool) -> Self {
        Self {
            obs_dim,
            uses_requester,
            ..Default::default()
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn push(&mut self, t: Transition) -> Result<()> {
        if t.observation.len() != self.obs_dim {
            return Err(Error::Contract(format!(
                "observation has {} features, buffer holds {}",
                t.observation.len(),
                self.obs_dim
            )));
        }
        self.observations.extend_from_slice(&t.observation);
        self.meta.push(t.meta);
        self.actions.push(t.action);
        self.labels.push(t.label);
        self.logp_meta.push(t.logp_meta);
        self.logp_action.push(t.logp_action);
        self.rewards.push(t.reward);
        self.terminated.push(t.terminated);
        self.episode_end.push(t.terminated || t.truncated);
        self.values.push(t.value);
        self.next_values.push(t.next_value);
        self.unstable.push(false);
        Ok(())
    }

    /// Overwrites the bootstrap value of the final step; used when the
    /// iteration cuts an episode short.
    pub fn set_last_next_value(&mut self, v: f64) {
        if let Some(last) = self.next_values.last_mut() {
            *last = v;
        }
    }

    pub fn observation(&self, i: usize) -> &[f64] {
        &self.observations[i * self.obs_dim..(i + 1) * self.obs_dim]
    }

    /// Rows `indices` stacked into a `(len, obs_dim)` matrix.
    pub fn gather(&self, indices: &[usize]) -> Array2<f64> {
        let mut m = Array2::zeros((indices.len(), self.obs_dim));
        for (row, &i) in indices.iter().enumerate() {
            m.row_mut(row).assign(&ndarray::ArrayView1::from(self.observation(i)));
        }
        m
    }

    /// Joint behaviour log-probability `log g(y|s) + 1{exec}·log π(a|s)`.
    pub fn old_logp(&self, i: usize) -> f64 {
        let meta = if self.uses_requester { self.logp_meta[i] } else { 0.0 };
        let act = if self.meta[i] == MetaAction::Exec {
            self.logp_action[i]
        } else {
            0.0
        };
        meta + act
    }

    /// Fills `advantages` by GAE and `returns = advantages + values`.
    pub fn finish(&mut self, gamma: f64, lambda: f64) -> Result<()> {
        self.advantages = compute_gae(
            &self.rewards,
            &self.values,
            &self.next_values,
            &self.episode_end,
            gamma,
            lambda,
        );
        self.returns = self.advantages.iter().zip(&self.values).map(|(a, v)| a + v).collect();
        ensure_finite("advantages", self.advantages.iter().copied())
    }

    /// Plain discounted returns with the same bootstraps as [`RolloutBuffer::finish`].
    pub fn discounted_returns(&self, gamma: f64) -> Vec<f64> {
        compute_returns(&self.rewards, &self.next_values, &self.episode_end, gamma)
    }

    pub fn ask_count(&self) -> usize {
        self.meta.iter().filter(|&&y| y == MetaAction::Ask).count()
    }

    pub fn clear_selection(&mut self) {
        self.unstable.iter_mut().for_each(|u| *u = false);
    }
}

/// Advantages shifted and scaled to mean 0, standard deviation 1.
pub fn normalize(advantages: &[f64]) -> Vec<f64> {
    let n = advantages.len() as f64;
    if advantages.is_empty() {
        return Vec::new();
    }
    let mean = advantages.iter().sum::<f64>() / n;
    let var = advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    let std = std.max(1e-8);
    advantages.iter().map(|a| (a - mean) / std).collect()
}
