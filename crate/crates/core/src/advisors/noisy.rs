use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Advisor, AdvisorQuery, AdvisorReply, IterationStats};
use crate::error::{Error, Result};

/// Answers with the inner advisor's action with probability `accuracy`, and
/// with a uniformly random legal action otherwise.
#[derive(Debug, Clone)]
pub struct NoisyAdvisor<A> {
    inner: A,
    accuracy: f64,
    rng: ChaCha8Rng,
}

impl<A: Advisor> NoisyAdvisor<A> {
    pub fn new(inner: A, accuracy: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&accuracy) {
            return Err(Error::Config(format!("advisor accuracy {accuracy} outside [0, 1]")));
        }
        Ok(Self {
            inner,
            accuracy,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn accuracy(&self) -> f64 {
        self.accuracy
    }
}

impl<A: Advisor> Advisor for NoisyAdvisor<A> {
    fn advise(&mut self, query: &AdvisorQuery) -> Result<AdvisorReply> {
        if query.legal.is_empty() {
            return Err(Error::Contract("query lists no legal actions".into()));
        }
        let coin: f64 = self.rng.random();
        if coin < self.accuracy {
            return self.inner.advise(query);
        }
        let action = query.legal[self.rng.random_range(0..query.legal.len())];
        Ok(AdvisorReply { id: query.id, action })
    }

    fn on_iteration(&mut self, stats: &IterationStats) {
        self.inner.on_iteration(stats);
    }

    fn needs_render(&self) -> bool {
        self.inner.needs_render()
    }
}
