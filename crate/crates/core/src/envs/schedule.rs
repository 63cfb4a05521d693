use serde::{Deserialize, Serialize};

use super::{CartPoleParams, EnvParams, GridWorldConfig};
use crate::error::{Error, Result};

/// Ordered `(global step, parameters)` switches. Once the global step reaches
/// `T_k` the environment runs with the parameters paired with `T_k`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChangepointSchedule {
    changes: Vec<(u64, EnvParams)>,
    #[serde(skip)]
    applied: usize,
}

impl ChangepointSchedule {
    pub fn new(changes: Vec<(u64, EnvParams)>) -> Result<Self> {
        if changes.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::Config("changepoint steps must be strictly increasing".into()));
        }
        if let Some(first) = changes.first() {
            let tag = first.1.tag();
            if changes.iter().any(|c| c.1.tag() != tag) {
                return Err(Error::Config("changepoints must keep the environment kind".into()));
            }
        }
        Ok(Self { changes, applied: 0 })
    }

    pub fn stationary() -> Self {
        Self::default()
    }

    /// Pole half-length 0.5 → 1.0 → 2.0 at 1e5 and 2e5 steps.
    pub fn cartpole_pole_lengths() -> Self {
        Self::new(vec![
            (100_000, EnvParams::CartPole(CartPoleParams::with_half_length(1.0))),
            (200_000, EnvParams::CartPole(CartPoleParams::with_half_length(2.0))),
        ])
        .expect("static schedule is ordered")
    }

    /// Maze 5×5 → 6×6 → 8×8 at 1e5 and 2e5 steps, encoded at 8×8 throughout.
    pub fn doorkey_sizes() -> Self {
        Self::new(vec![
            (100_000, EnvParams::DoorKey(GridWorldConfig::padded(6, 8))),
            (200_000, EnvParams::DoorKey(GridWorldConfig::padded(8, 8))),
        ])
        .expect("static schedule is ordered")
    }

    pub fn changepoints(&self) -> impl Iterator<Item = u64> + '_ {
        self.changes.iter().map(|c| c.0)
    }

    pub fn is_empty(&self) -> bool {
        self.changes.is_empty()
    }

    /// Returns the parameters of the latest changepoint crossed since the
    /// previous call, if any.
    pub fn advance(&mut self, global_step: u64) -> Option<EnvParams> {
        let mut latest = None;
        while let Some(&(at, params)) = self.changes.get(self.applied) {
            if global_step < at {
                break;
            }
            latest = Some(params);
            self.applied += 1;
        }
        latest
    }
}
