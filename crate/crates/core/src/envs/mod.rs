//! Environments: cart-pole, the door-key gridworld, and changepoint
//! schedules that turn either into a sequence of MDPs sharing one state and
//! action space.

pub mod cartpole;
pub mod doorkey;
mod schedule;

use serde::{Deserialize, Serialize};

pub use cartpole::{CartPole, CartPoleParams, CartPoleState};
pub use doorkey::{DoorKey, DoorKeyState, GridWorldConfig};
pub use schedule::ChangepointSchedule;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Vec<f64>,
    pub reward: f64,
    /// The MDP reached a terminal state; no bootstrapping past it.
    pub terminated: bool,
    /// The episode hit its time limit.
    pub truncated: bool,
}

impl StepResult {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvTag {
    CartPole,
    DoorKey,
}

impl EnvTag {
    pub fn as_str(self) -> &'static str {
        match self {
            EnvTag::CartPole => "cartpole",
            EnvTag::DoorKey => "doorkey",
        }
    }

    pub fn action_names(self) -> &'static [&'static str] {
        match self {
            EnvTag::CartPole => &["push_left", "push_right"],
            EnvTag::DoorKey => &doorkey::ACTION_NAMES,
        }
    }
}

/// Parameters of one MDP in a sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EnvParams {
    CartPole(CartPoleParams),
    DoorKey(GridWorldConfig),
}

impl EnvParams {
    pub fn tag(&self) -> EnvTag {
        match self {
            EnvParams::CartPole(_) => EnvTag::CartPole,
            EnvParams::DoorKey(_) => EnvTag::DoorKey,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Env {
    CartPole(CartPole),
    DoorKey(DoorKey),
}

impl Env {
    pub fn new(params: EnvParams, seed: u64) -> Result<Self> {
        Ok(match params {
            EnvParams::CartPole(p) => Env::CartPole(CartPole::new(p, seed)?),
            EnvParams::DoorKey(c) => Env::DoorKey(DoorKey::new(c, seed)?),
        })
    }

    pub fn tag(&self) -> EnvTag {
        match self {
            Env::CartPole(_) => EnvTag::CartPole,
            Env::DoorKey(_) => EnvTag::DoorKey,
        }
    }

    pub fn params(&self) -> EnvParams {
        match self {
            Env::CartPole(e) => EnvParams::CartPole(*e.params()),
            Env::DoorKey(e) => EnvParams::DoorKey(*e.config()),
        }
    }

    /// Swaps in the parameters of the next MDP. Cart-pole dynamics change on
    /// the very next step; a door-key layout change shows at the next reset.
    pub fn set_params(&mut self, params: EnvParams) -> Result<()> {
        match (self, params) {
            (Env::CartPole(e), EnvParams::CartPole(p)) => e.set_params(p),
            (Env::DoorKey(e), EnvParams::DoorKey(c)) => e.set_config(c),
            _ => Err(Error::Config("changepoint switches the environment kind".into())),
        }
    }

    pub fn observation_len(&self) -> usize {
        match self {
            Env::CartPole(_) => 4,
            Env::DoorKey(e) => e.config().observation_len(),
        }
    }

    pub fn num_actions(&self) -> usize {
        match self {
            Env::CartPole(_) => 2,
            Env::DoorKey(_) => doorkey::NUM_ACTIONS,
        }
    }

    pub fn reset(&mut self) -> Vec<f64> {
        match self {
            Env::CartPole(e) => e.reset(),
            Env::DoorKey(e) => e.reset(),
        }
    }

    /// Reseeds the environment's own stream, then resets.
    pub fn reset_with_seed(&mut self, seed: u64) -> Vec<f64> {
        match self {
            Env::CartPole(e) => e.reseed(seed),
            Env::DoorKey(e) => e.reseed(seed),
        }
        self.reset()
    }

    pub fn step(&mut self, action: usize) -> Result<StepResult> {
        match self {
            Env::CartPole(e) => e.step(action),
            Env::DoorKey(e) => e.step(action),
        }
    }

    /// Drawing data for a human advisor's console.
    pub fn render(&self) -> serde_json::Value {
        match self {
            Env::CartPole(e) => e.render(),
            Env::DoorKey(e) => e.render(),
        }
    }
}
