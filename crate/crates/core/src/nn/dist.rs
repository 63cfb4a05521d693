//! Categorical distributions over logits: stable softmax, sampling and
//! cross-entropy with its closed-form gradient.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// Probability vector over a finite action set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalDist {
    probs: Vec<f64>,
}

impl CategoricalDist {
    /// Validates that `probs` is nonnegative and sums to one within 1e-6.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        ensure_finite("probabilities", probs.iter().copied())?;
        if probs.is_empty() || probs.iter().any(|&p| p < 0.0) {
            return Err(Error::Contract("probabilities must be nonnegative and nonempty".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::Contract(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn prob(&self, index: usize) -> f64 {
        self.probs[index]
    }

    /// Most likely index; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    pub fn entropy(&self) -> f64 {
        -self.probs.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_action(self, rng)
    }
}

/// Max-subtracted softmax.
pub fn softmax(logits: &[f64]) -> Result<CategoricalDist> {
    ensure_finite("logits", logits.iter().copied())?;
    if logits.is_empty() {
        return Err(Error::Contract("softmax of an empty logit vector".into()));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(CategoricalDist {
        probs: exps.into_iter().map(|e| e / total).collect(),
    })
}

/// `log softmax(logits)` computed without forming the probabilities first.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|&z| z - lse).collect()
}

/// Row-wise [`log_softmax`] for a `(batch, classes)` logit matrix.
pub fn log_softmax_rows(logits: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = logits.to_owned();
    for mut row in out.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
        row.mapv_inplace(|z| z - lse);
    }
    out
}

/// Inverse-CDF draw of one index. Zero-probability entries are never returned.
pub fn sample_action<R: Rng + ?Sized>(dist: &CategoricalDist, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in dist.probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last_positive = i;
        if u < acc {
            return i;
        }
    }
    last_positive
}

/// `-ln softmax(logits)[target]`.
pub fn cross_entropy(target: usize, logits: &[f64]) -> Result<f64> {
    check_target(target, logits.len())?;
    ensure_finite("logits", logits.iter().copied())?;
    Ok(-log_softmax(logits)[target])
}

/// Cross-entropy and its gradient `softmax(logits) - onehot(target)`.
pub fn cross_entropy_with_grad(target: usize, logits: &[f64]) -> Result<(f64, Vec<f64>)> {
    let loss = cross_entropy(target, logits)?;
    let mut grad = softmax(logits)?.probs;
    grad[target] -= 1.0;
    Ok((loss, grad))
}

fn check_target(target: usize, classes: usize) -> Result<()> {
    if target >= classes {
        return Err(Error::Contract(format!(
            "target class {target} out of range for {classes} classes"
        )));
    }
    Ok(())
}
