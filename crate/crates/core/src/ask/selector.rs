//! Adaptive state selection: flag the history states whose value error
//! jumped relative to its running average.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Mlp;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectorState {
    /// Exponentially weighted average of the iteration value loss; starts at 0.
    pub ewma: f64,
    pub beta: f64,
    /// Largest fraction of history states that may be marked unstable.
    pub delta: f64,
    pub iteration: u64,
}

/// Outcome of one selection round.
#[derive(Debug, Clone, PartialEq)]
pub struct UnstableSelection {
    pub value_loss: f64,
    pub ewma: f64,
    pub rate: f64,
    pub count: usize,
    /// Buffer indices, largest error first.
    pub states: Vec<usize>,
}

impl SelectorState {
    pub fn new(beta: f64, delta: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&beta) {
            return Err(Error::Config(format!("exponential decay rate {beta} outside [0, 1)")));
        }
        if !(0.0..=1.0).contains(&delta) {
            return Err(Error::Config(format!("max unstable rate {delta} outside [0, 1]")));
        }
        Ok(Self {
            ewma: 0.0,
            beta,
            delta,
            iteration: 0,
        })
    }

    /// Folds in this iteration's value errors and picks the unstable states.
    pub fn select(&mut self, errors: &[f64]) -> Result<UnstableSelection> {
        let value_loss = value_loss(errors)?;
        let (ewma, rate) = update(self.ewma, self.beta, value_loss);
        if !(0.0..=1.0).contains(&rate) {
            return Err(Error::Numeric(format!("unstable rate {rate} left [0, 1]")));
        }
        self.ewma = ewma;
        self.iteration += 1;
        let count = unstable_count(rate, self.delta, errors.len());
        Ok(UnstableSelection {
            value_loss,
            ewma,
            rate,
            count,
            states: select_unstable(errors, count),
        })
    }
}

/// `(V(s) − G)²` for each row of `states`, with the critic as it is now.
pub fn value_errors(critic: &Mlp, states: ArrayView2<'_, f64>, returns: &[f64]) -> Result<Vec<f64>> {
    if states.nrows() != returns.len() {
        return Err(Error::Contract("states and returns differ in length".into()));
    }
    let trace = critic.forward_batch(states)?;
    Ok(trace
        .output()
        .column(0)
        .iter()
        .zip(returns)
        .map(|(v, g)| (v - g) * (v - g))
        .collect())
}

/// Mean value error over the iteration's history states.
pub fn value_loss(errors: &[f64]) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::Contract("no history states this iteration".into()));
    }
    Ok(errors.iter().sum::<f64>() / errors.len() as f64)
}

/// `W = β·W_prev + (1−β)·L`.
pub fn update_ewma(prev: f64, beta: f64, loss: f64) -> f64 {
    update(prev, beta, loss).0
}

/// `(1−β)·L / W`, with `W` already holding this `L`; 0 when `W` is 0.
pub fn unstable_rate(loss: f64, ewma: f64, beta: f64) -> f64 {
    if ewma == 0.0 {
        0.0
    } else {
        ((1.0 - beta) * loss / ewma).min(1.0)
    }
}

// Shares the `(1−β)·L` product between numerator and denominator so the ratio
// cannot round above 1.
fn update(prev: f64, beta: f64, loss: f64) -> (f64, f64) {
    let fresh = (1.0 - beta) * loss;
    let ewma = beta * prev + fresh;
    let rate = if ewma == 0.0 { 0.0 } else { fresh / ewma };
    (ewma, rate)
}

/// `⌈R·δ·N⌉`, capped at `N`.
///
/// A slack of 1e-9 keeps products like `0.1·0.1·1000` from rounding up past
/// the integer they represent.
pub fn unstable_count(rate: f64, delta: f64, history: usize) -> usize {
    let x = rate * delta * history as f64;
    let k = (x - 1e-9).ceil().max(0.0) as usize;
    k.min(history)
}

/// Indices of the `k` largest errors, largest first; equal errors keep buffer order.
pub fn select_unstable(errors: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..errors.len()).collect();
    idx.sort_by(|&a, &b| errors[b].total_cmp(&errors[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Dense};
    use ndarray::{Array1, Array2};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn value_error_examples() {
        let zero = Mlp::from_layers(vec![Dense {
            weight: Array2::zeros((2, 1)),
            bias: Array1::zeros(1),
            activation: Activation::Identity,
        }])
        .unwrap();
        let states = Array2::zeros((2, 2));
        assert_eq!(value_errors(&zero, states.view(), &[3.0, 0.0]).unwrap(), vec![9.0, 0.0]);
    }

    #[test]
    fn value_errors_match_elementwise_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let critic = Mlp::new(4, &[16, 16], 1, 1.0, &mut rng).unwrap();
        let states = Array2::from_shape_fn((200, 4), |_| rng.random_range(-1.0..1.0));
        let returns: Vec<f64> = (0..200).map(|_| rng.random_range(-5.0..5.0)).collect();
        let e = value_errors(&critic, states.view(), &returns).unwrap();
        for i in 0..200 {
            let v = critic.forward(&states.row(i).to_vec()).unwrap()[0];
            assert!((e[i] - (v - returns[i]).powi(2)).abs() < 1e-12);
        }
        let exact: Vec<f64> = (0..200).map(|i| critic.forward(&states.row(i).to_vec()).unwrap()[0]).collect();
        assert!(value_errors(&critic, states.view(), &exact).unwrap().iter().all(|&x| x < 1e-24));
    }

    #[test]
    fn value_loss_examples() {
        assert_eq!(value_loss(&[1.0, 2.0, 3.0]).unwrap(), 2.0);
        assert_eq!(value_loss(&[0.0; 5]).unwrap(), 0.0);
        assert!(matches!(value_loss(&[]), Err(Error::Contract(_))));
    }

    #[test]
    fn ewma_examples() {
        assert!((update_ewma(0.0, 0.9, 10.0) - 1.0).abs() < 1e-12);
        assert!((update_ewma(1.0, 0.9, 100.0) - 10.9).abs() < 1e-12);
        let mut w = 0.0;
        for _ in 0..200 {
            w = update_ewma(w, 0.9, 7.0);
        }
        assert!((w - 7.0).abs() < 1e-6);
    }

    #[test]
    fn rate_examples() {
        let (w, r) = update(0.0, 0.9, 4.2);
        assert_eq!(r, 1.0);
        assert_eq!(unstable_rate(4.2, w, 0.9), 1.0);
        let (_, r) = update(5.0, 0.9, 5.0);
        assert!((r - 0.1).abs() < 1e-12);
        let (w, r) = update(1.0, 0.9, 100.0);
        assert!((r - 10.0 / 10.9).abs() < 1e-12);
        assert!((unstable_rate(100.0, w, 0.9) - 0.9174).abs() < 1e-4);
        assert_eq!(unstable_rate(0.0, 0.0, 0.9), 0.0);
    }

    #[test]
    fn count_examples() {
        assert_eq!(unstable_count(1.0, 0.1, 2048), 205);
        assert_eq!(unstable_count(0.1, 0.1, 40), 1);
        assert_eq!(unstable_count(0.0, 0.1, 2048), 0);
        assert_eq!(unstable_count(0.1, 0.1, 1000), 10);
        assert_eq!(unstable_count(1.0, 1.0, 7), 7);
    }

    #[test]
    fn selection_examples() {
        assert_eq!(select_unstable(&[1.0, 5.0, 3.0], 1), vec![1]);
        let mut all = select_unstable(&[1.0, 5.0, 3.0], 3);
        all.sort();
        assert_eq!(all, vec![0, 1, 2]);
        assert_eq!(select_unstable(&[2.0, 1.0, 2.0, 2.0], 2), vec![0, 2]);
    }

    #[test]
    fn first_iteration_rate_is_one() {
        let mut s = SelectorState::new(0.9, 0.1).unwrap();
        let sel = s.select(&[0.5, 1.5, 2.5, 0.0]).unwrap();
        assert_eq!(sel.rate, 1.0);
        assert_eq!(sel.count, 1);
        assert_eq!(sel.states, vec![2]);
    }

    #[test]
    fn zero_delta_selects_nothing() {
        let mut s = SelectorState::new(0.9, 0.0).unwrap();
        assert!(s.select(&[1.0, 2.0]).unwrap().states.is_empty());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn mean_matches_direct_sum(e in prop::collection::vec(0.0..100.0f64, 1..300)) {
            let direct = e.iter().fold(0.0, |acc, x| acc + x) / e.len() as f64;
            prop_assert!((value_loss(&e).unwrap() - direct).abs() < 1e-10);
        }

        #[test]
        fn selection_equals_full_sort(e in prop::collection::vec(0u8..50, 1..1000), frac in 0.0..=1.0f64) {
            // small integer errors force plenty of ties
            let errors: Vec<f64> = e.iter().map(|&v| v as f64 / 4.0).collect();
            let k = (frac * errors.len() as f64) as usize;
            let mut pairs: Vec<(f64, usize)> = errors.iter().copied().zip(0..).collect();
            // stable sort by descending error keeps index order inside ties
            pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
            let oracle: Vec<usize> = pairs.iter().take(k).map(|p| p.1).collect();
            prop_assert_eq!(select_unstable(&errors, k), oracle);
        }

        #[test]
        fn rate_stays_in_unit_interval(prev in 0.0..1e6f64, loss in 0.0..1e6f64, beta in 0.0..0.999f64) {
            let (w, r) = update(prev, beta, loss);
            prop_assert!((0.0..=1.0).contains(&r));
            prop_assert!(w >= 0.0);
        }

        #[test]
        fn rate_is_monotone_in_the_loss(prev in 0.0..1e3f64, a in 0.0..1e3f64, b in 0.0..1e3f64) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(update(prev, 0.9, lo).1 <= update(prev, 0.9, hi).1);
        }

        #[test]
        fn calm_iterations_stay_below_one_minus_beta(prev in 1e-3..1e3f64, f in 0.0..=1.0f64) {
            let loss = f * prev;
            prop_assert!(update(prev, 0.9, loss).1 <= 0.1 + 1e-12);
        }

        #[test]
        fn spikes_push_the_rate_up(prev in 1e-3..1e3f64, f in 1.0..100.0f64) {
            let loss = f * 9.0 * prev / 0.1;
            prop_assert!(update(prev, 0.9, loss).1 >= 0.9 - 1e-12);
        }

        #[test]
        fn selection_never_exceeds_the_cap(e in prop::collection::vec(0.0..10.0f64, 1..500), prev in 0.0..10.0f64, delta in 0.0..=1.0f64) {
            let mut s = SelectorState::new(0.9, delta).unwrap();
            s.ewma = prev;
            let sel = s.select(&e).unwrap();
            let cap = (delta * e.len() as f64 - 1e-9).ceil().max(0.0) as usize;
            prop_assert!(sel.states.len() <= cap);
            prop_assert_eq!(sel.states.len(), sel.count);
        }
    }
}
