use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::nn::{softmax, Mlp};

/// The requester's two outputs. Index 0 is ask, index 1 is exec.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetaAction {
    Ask,
    Exec,
}

impl MetaAction {
    pub const COUNT: usize = 2;

    pub fn index(self) -> usize {
        match self {
            MetaAction::Ask => 0,
            MetaAction::Exec => 1,
        }
    }

    pub fn from_index(i: usize) -> Self {
        match i {
            0 => MetaAction::Ask,
            _ => MetaAction::Exec,
        }
    }
}

/// Samples ask/exec from the requester. Returns the decision and its log-probability.
pub fn decide_meta<R: Rng + ?Sized>(requester: &Mlp, observation: &[f64], rng: &mut R) -> Result<(MetaAction, f64)> {
    let logits = requester.forward(observation)?;
    let dist = softmax(&logits)?;
    let y = MetaAction::from_index(dist.sample(rng));
    Ok((y, dist.prob(y.index()).ln()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Dense};
    use ndarray::{Array1, Array2};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fixed_requester(logits: [f64; 2]) -> Mlp {
        Mlp::from_layers(vec![Dense {
            weight: Array2::zeros((3, 2)),
            bias: Array1::from(logits.to_vec()),
            activation: Activation::Identity,
        }])
        .unwrap()
    }

    #[test]
    fn saturated_requester_always_asks() {
        let g = fixed_requester([20.0, -20.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..1000 {
            assert_eq!(decide_meta(&g, &[0.1, 0.2, 0.3], &mut rng).unwrap().0, MetaAction::Ask);
        }
    }

    #[test]
    fn uniform_requester_asks_half_the_time() {
        let g = fixed_requester([0.0, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 100_000;
        let asks = (0..n)
            .filter(|_| decide_meta(&g, &[0.0; 3], &mut rng).unwrap().0 == MetaAction::Ask)
            .count() as f64;
        assert!((asks / n as f64 - 0.5).abs() < 0.01);
    }

    #[test]
    fn log_probability_matches_the_decision() {
        let g = fixed_requester([1.0, -0.5]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p_ask = 1.0 / (1.0 + (-1.5f64).exp());
        for _ in 0..100 {
            let (y, lp) = decide_meta(&g, &[0.0; 3], &mut rng).unwrap();
            let expect = if y == MetaAction::Ask { p_ask } else { 1.0 - p_ask };
            assert!((lp - expect.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn index_round_trip() {
        for y in [MetaAction::Ask, MetaAction::Exec] {
            assert_eq!(MetaAction::from_index(y.index()), y);
        }
    }
}
