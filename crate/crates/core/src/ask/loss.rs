//! Advisor and ask losses as standalone full-set means.
//!
//! The trainer evaluates the same terms inside the fused minibatch objective;
//! these versions work one sample at a time and serve as its reference.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::MetaAction;
use crate::agent::{NetGrads, Nets};
use crate::error::Result;
use crate::nn::{cross_entropy_with_grad, Grads, Mlp};

/// States on which the agent asked, with the advisor's answers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdvisorExampleSet {
    examples: Vec<(Vec<f64>, usize)>,
}

impl AdvisorExampleSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, observation: Vec<f64>, action: usize) {
        self.examples.push((observation, action));
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], usize)> {
        self.examples.iter().map(|(o, a)| (o.as_slice(), *a))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AskLossWeights {
    pub advisor: f64,
    pub ask: f64,
}

impl Default for AskLossWeights {
    fn default() -> Self {
        Self { advisor: 1.0, ask: 0.5 }
    }
}

/// Cross-entropy of `target` under one network's head, with its gradient
/// accumulated into `grads` scaled by `weight`.
fn ce_single(net: &Mlp, observation: &[f64], target: usize, weight: f64, grads: &mut Grads) -> Result<f64> {
    let x = Array2::from_shape_vec((1, observation.len()), observation.to_vec())
        .expect("row vector shape always fits");
    let trace = net.forward_batch(x.view())?;
    let logits = trace.output().row(0).to_vec();
    let (loss, d) = cross_entropy_with_grad(target, &logits)?;
    let d = Array2::from_shape_vec((1, d.len()), d).expect("gradient matches logits");
    grads.add_scaled(&net.backward(&trace, &d), weight);
    Ok(loss)
}

/// `1/|D| Σ [CE(a*, π(s)) + CE(exec, g(s))]`; the requester part is dropped
/// when `with_requester` is false. Zero with zero gradients on an empty set.
pub fn advisor_loss(examples: &AdvisorExampleSet, nets: &Nets, with_requester: bool) -> Result<(f64, NetGrads)> {
    let mut grads = NetGrads::zeros(nets);
    if examples.is_empty() {
        return Ok((0.0, grads));
    }
    let w = 1.0 / examples.len() as f64;
    let mut total = 0.0;
    for (obs, label) in examples.iter() {
        total += w * ce_single(&nets.actor, obs, label, w, &mut grads.actor)?;
        if with_requester {
            total += w * ce_single(&nets.requester, obs, MetaAction::Exec.index(), w, &mut grads.requester)?;
        }
    }
    Ok((total, grads))
}

/// `1/|S_u| Σ CE(ask, g(s))` over the unstable states; zero when there are none.
pub fn ask_loss<'a>(states: impl IntoIterator<Item = &'a [f64]>, nets: &Nets) -> Result<(f64, NetGrads)> {
    let states: Vec<&[f64]> = states.into_iter().collect();
    let mut grads = NetGrads::zeros(nets);
    if states.is_empty() {
        return Ok((0.0, grads));
    }
    let w = 1.0 / states.len() as f64;
    let mut total = 0.0;
    for obs in states {
        total += w * ce_single(&nets.requester, obs, MetaAction::Ask.index(), w, &mut grads.requester)?;
    }
    Ok((total, grads))
}

pub fn total_loss(org: f64, advisor: f64, ask: f64, weights: AskLossWeights) -> f64 {
    org + weights.advisor * advisor + weights.ask * ask
}
