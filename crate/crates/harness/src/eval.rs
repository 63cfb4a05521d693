//! Test-time evaluation: greedy actor, no requester, no advisor.

use askac_core::agent::Nets;
use askac_core::envs::{Env, EnvParams};
use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub mean: f64,
    /// Population standard deviation over the episodes.
    pub std: f64,
    pub returns: Vec<f64>,
}

impl EvalResult {
    pub fn from_returns(returns: Vec<f64>) -> Self {
        let n = returns.len().max(1) as f64;
        let mean = returns.iter().sum::<f64>() / n;
        let var = returns.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt(),
            returns,
        }
    }
}

/// Offset between a run's training seed and its evaluation episodes.
pub const EVAL_SEED_OFFSET: u64 = 1000;

/// Greedy rollouts of `nets`; episode `i` starts from seed `seed + i`.
pub fn evaluate(nets: &Nets, env: EnvParams, episodes: usize, seed: u64) -> Result<EvalResult> {
    evaluate_with(|obs| nets.greedy_action(obs), env, episodes, seed)
}

/// Same rollouts with an arbitrary policy.
pub fn evaluate_with(
    mut policy: impl FnMut(&[f64]) -> askac_core::Result<usize>,
    env: EnvParams,
    episodes: usize,
    seed: u64,
) -> Result<EvalResult> {
    let mut env = Env::new(env, seed)?;
    let mut returns = Vec::with_capacity(episodes);
    for i in 0..episodes {
        let mut obs = env.reset_with_seed(seed + i as u64);
        let mut total = 0.0;
        loop {
            let step = env.step(policy(&obs)?)?;
            total += step.reward;
            if step.done() {
                break;
            }
            obs = step.observation;
        }
        returns.push(total);
    }
    Ok(EvalResult::from_returns(returns))
}
