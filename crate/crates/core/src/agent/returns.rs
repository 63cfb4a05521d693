//! Discounted returns and generalized advantage estimates over one iteration.
//!
//! Every step carries its own `next_value`: V(s') after an ordinary step,
//! V(final observation) after a time-limit truncation, 0 after termination,
//! and V(s') at the iteration cut. `episode_end[t]` stops the recursion from
//! reaching across an episode boundary.

/// `G_t = r_t + γ·next_value_t` at an episode end or the last step,
/// `G_t = r_t + γ·G_{t+1}` otherwise.
pub fn compute_returns(rewards: &[f64], next_values: &[f64], episode_end: &[bool], gamma: f64) -> Vec<f64> {
    let n = rewards.len();
    assert!(next_values.len() == n && episode_end.len() == n, "misaligned arrays");
    let mut out = vec![0.0; n];
    for t in (0..n).rev() {
        let tail = if episode_end[t] || t + 1 == n {
            next_values[t]
        } else {
            out[t + 1]
        };
        out[t] = rewards[t] + gamma * tail;
    }
    out
}

/// `A_t = Σ_l (γλ)^l δ_{t+l}` within the episode, where
/// `δ_t = r_t + γ·next_value_t − V(s_t)`.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    next_values: &[f64],
    episode_end: &[bool],
    gamma: f64,
    lambda: f64,
) -> Vec<f64> {
    let n = rewards.len();
    assert!(
        values.len() == n && next_values.len() == n && episode_end.len() == n,
        "misaligned arrays"
    );
    let mut out = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        if episode_end[t] {
            running = 0.0;
        }
        let delta = rewards[t] + gamma * next_values[t] - values[t];
        running = delta + gamma * lambda * running;
        out[t] = running;
    }
    out
}

/// GAE in the textbook layout: `values` has one extra bootstrap entry and
/// `dones[t]` marks a terminal transition.
pub fn compute_gae_bootstrapped(rewards: &[f64], values: &[f64], dones: &[bool], gamma: f64, lambda: f64) -> Vec<f64> {
    assert_eq!(values.len(), rewards.len() + 1, "values need a bootstrap entry");
    let n = rewards.len();
    let next: Vec<f64> = (0..n).map(|t| if dones[t] { 0.0 } else { values[t + 1] }).collect();
    compute_gae(rewards, &values[..n], &next, dones, gamma, lambda)
}
