//! Advisors behind a single query interface.
//!
//! An advisor sees only what the agent sends it (the encoded state, legal
//! actions and a drawing payload) and answers with one action index.

pub mod experts;
mod noisy;
pub mod protocol;
mod remote;

use serde::{Deserialize, Serialize};

use crate::envs::EnvTag;
use crate::error::{Error, Result};

pub use experts::{cartpole_expert, doorkey_expert, doorkey_plan};
pub use noisy::NoisyAdvisor;
pub use remote::RemoteAdvisor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvisorQuery {
    pub env: EnvTag,
    pub state: Vec<f64>,
    pub legal: Vec<usize>,
    /// Strictly increasing within a run.
    pub id: u64,
    pub render: serde_json::Value,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdvisorReply {
    pub id: u64,
    pub action: usize,
}

/// Per-iteration progress an advisor may want to display.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    pub iteration: u64,
    pub rate_of_asking: f64,
    pub average_return: f64,
}

pub trait Advisor {
    /// Answers one query. [`Error::AdvisorTimeout`] and [`Error::Protocol`]
    /// tell the trainer to fall back to the agent's own action.
    fn advise(&mut self, query: &AdvisorQuery) -> Result<AdvisorReply>;

    fn on_iteration(&mut self, _stats: &IterationStats) {}

    /// Whether queries should carry a drawing payload.
    fn needs_render(&self) -> bool {
        false
    }
}

impl<A: Advisor + ?Sized> Advisor for Box<A> {
    fn advise(&mut self, query: &AdvisorQuery) -> Result<AdvisorReply> {
        (**self).advise(query)
    }

    fn on_iteration(&mut self, stats: &IterationStats) {
        (**self).on_iteration(stats)
    }

    fn needs_render(&self) -> bool {
        (**self).needs_render()
    }
}

/// Scripted expert for whichever environment the query comes from.
#[derive(Debug, Clone, Copy, Default)]
pub struct ScriptedExpert;

impl Advisor for ScriptedExpert {
    fn advise(&mut self, query: &AdvisorQuery) -> Result<AdvisorReply> {
        let action = match query.env {
            EnvTag::CartPole => cartpole_expert(&query.state),
            EnvTag::DoorKey => doorkey_expert(&query.state)?,
        };
        if !query.legal.contains(&action) {
            return Err(Error::Contract(format!("expert chose illegal action {action}")));
        }
        Ok(AdvisorReply { id: query.id, action })
    }
}
