//! Wire format shared with the advisor console: one JSON object per
//! WebSocket text frame, discriminated by `"type"`. Unknown fields are ignored.

use serde::{Deserialize, Serialize};

use super::{AdvisorQuery, IterationStats};
use crate::envs::EnvTag;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Message {
    /// Sent by the trainer when a console connects.
    Hello { env: String, actions: Vec<String> },
    /// Sent by the trainer; at most one is outstanding.
    Ask {
        id: u64,
        state: Vec<f64>,
        render: serde_json::Value,
        legal: Vec<usize>,
    },
    /// Sent by the console in answer to an `ask`.
    Feedback { id: u64, action: usize },
    /// Sent by the trainer after every iteration.
    Stats {
        iter: u64,
        roa: f64,
        #[serde(rename = "return")]
        average_return: f64,
    },
}

impl Message {
    pub fn hello(env: EnvTag) -> Self {
        Message::Hello {
            env: env.as_str().to_owned(),
            actions: env.action_names().iter().map(|s| (*s).to_owned()).collect(),
        }
    }

    pub fn ask(query: &AdvisorQuery) -> Self {
        Message::Ask {
            id: query.id,
            state: query.state.clone(),
            render: query.render.clone(),
            legal: query.legal.clone(),
        }
    }

    pub fn stats(stats: &IterationStats) -> Self {
        Message::Stats {
            iter: stats.iteration,
            roa: stats.rate_of_asking,
            average_return: stats.average_return,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("protocol messages always serialize")
    }

    pub fn parse(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}
