//! Dense feed-forward networks with exact reverse-mode gradients.
//!
//! Weights are stored `(in_dim, out_dim)` so a batch forward pass is
//! `X · W + b` with `X` shaped `(batch, in_dim)`. Every layer keeps its own
//! activation tag; the output layer of the networks built here is linear.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation output `a = f(z)`.
    #[inline]
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn in_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.ncols()
    }
}

/// Parameters of one dense network (the actor, the critic or the requester).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Dense>,
}

/// Activations recorded by [`Mlp::forward_batch`]; `acts[0]` is the input and
/// `acts[L]` the output.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    acts: Vec<Array2<f64>>,
}

impl ForwardTrace {
    pub fn output(&self) -> &Array2<f64> {
        self.acts.last().expect("trace always holds the input")
    }
}

/// Gradient tensors shaped exactly like the layers of an [`Mlp`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Grads {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        Self {
            weights: mlp.layers.iter().map(|l| Array2::zeros(l.weight.raw_dim())).collect(),
            biases: mlp.layers.iter().map(|l| Array1::zeros(l.bias.raw_dim())).collect(),
        }
    }

    pub fn norm_sq(&self) -> f64 {
        self.values().map(|g| g * g).sum()
    }

    pub fn scale(&mut self, factor: f64) {
        for w in &mut self.weights {
            w.mapv_inplace(|g| g * factor);
        }
        for b in &mut self.biases {
            b.mapv_inplace(|g| g * factor);
        }
    }

    /// `self += factor * other`.
    pub fn add_scaled(&mut self, other: &Grads, factor: f64) {
        for (w, o) in self.weights.iter_mut().zip(&other.weights) {
            w.scaled_add(factor, o);
        }
        for (b, o) in self.biases.iter_mut().zip(&other.biases) {
            b.scaled_add(factor, o);
        }
    }

    /// All gradient entries in the same order as [`Mlp::flat_params`].
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| w.iter().chain(b.iter()).copied())
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.values().collect()
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(f64::is_finite)
    }
}

impl Mlp {
    /// Builds a network from explicit layers, checking that shapes chain.
    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("an MLP needs at least one layer".into()));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.out_dim() {
                return Err(Error::Config(format!(
                    "layer {i}: bias length {} does not match output width {}",
                    layer.bias.len(),
                    layer.out_dim()
                )));
            }
            if let Some(next) = layers.get(i + 1) {
                if next.in_dim() != layer.out_dim() {
                    return Err(Error::Config(format!(
                        "layer {} expects {} inputs but layer {i} produces {}",
                        i + 1,
                        next.in_dim(),
                        layer.out_dim()
                    )));
                }
            }
        }
        let mlp = Self { layers };
        crate::error::ensure_finite("MLP parameters", mlp.flat_params())?;
        Ok(mlp)
    }

    /// `input → hidden… → output` with tanh hidden layers and a linear output.
    ///
    /// Hidden weights use an orthogonal init with gain √2; the output layer is
    /// orthogonal with `output_gain` (0.01 for policy heads, 1.0 for the critic).
    /// Biases start at zero.
    pub fn new<R: Rng + ?Sized>(
        input: usize,
        hidden: &[usize],
        output: usize,
        output_gain: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if input == 0 || output == 0 || hidden.contains(&0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        let mut widths = Vec::with_capacity(hidden.len() + 2);
        widths.push(input);
        widths.extend_from_slice(hidden);
        widths.push(output);
        let last = widths.len() - 2;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, pair)| {
                let (gain, activation) = if i == last {
                    (output_gain, Activation::Identity)
                } else {
                    (std::f64::consts::SQRT_2, Activation::Tanh)
                };
                Dense {
                    weight: orthogonal(pair[0], pair[1], gain, rng),
                    bias: Array1::zeros(pair[1]),
                    activation,
                }
            })
            .collect();
        Self::from_layers(layers)
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()).copied())
            .collect()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::Config(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                flat.len()
            )));
        }
        let mut it = flat.iter().copied();
        for layer in &mut self.layers {
            for w in layer.weight.iter_mut().chain(layer.bias.iter_mut()) {
                *w = it.next().unwrap_or_default();
            }
        }
        Ok(())
    }

    /// Single-sample forward pass.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_dim() {
            return Err(dim_mismatch(self.input_dim(), input.len()));
        }
        let mut x = ArrayView1::from(input).to_owned();
        for layer in &self.layers {
            let mut z = x.dot(&layer.weight);
            z += &layer.bias;
            let act = layer.activation;
            z.mapv_inplace(|v| act.apply(v));
            x = z;
        }
        Ok(x.to_vec())
    }

    /// Batched forward pass keeping every activation for [`Mlp::backward`].
    pub fn forward_batch(&self, input: ArrayView2<'_, f64>) -> Result<ForwardTrace> {
        if input.ncols() != self.input_dim() {
            return Err(dim_mismatch(self.input_dim(), input.ncols()));
        }
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input.to_owned());
        for layer in &self.layers {
            let prev = acts.last().expect("input pushed above");
            let mut z = prev.dot(&layer.weight);
            z += &layer.bias;
            let act = layer.activation;
            if act != Activation::Identity {
                z.mapv_inplace(|v| act.apply(v));
            }
            acts.push(z);
        }
        Ok(ForwardTrace { acts })
    }

    /// Gradients of `sum(d_output ⊙ output)` with respect to every parameter.
    pub fn backward(&self, trace: &ForwardTrace, d_output: &Array2<f64>) -> Grads {
        assert_eq!(
            d_output.dim(),
            trace.output().dim(),
            "output gradient must match the traced output"
        );
        let n = self.layers.len();
        let mut weights = vec![Array2::zeros((0, 0)); n];
        let mut biases = vec![Array1::zeros(0); n];
        let mut delta = d_output.clone();
        for l in (0..n).rev() {
            let layer = &self.layers[l];
            if layer.activation != Activation::Identity {
                let out = &trace.acts[l + 1];
                let act = layer.activation;
                ndarray::Zip::from(&mut delta)
                    .and(out)
                    .for_each(|d, &a| *d *= act.derivative_from_output(a));
            }
            weights[l] = trace.acts[l].t().dot(&delta);
            biases[l] = delta.sum_axis(Axis(0));
            if l > 0 {
                delta = delta.dot(&layer.weight.t());
            }
        }
        Grads { weights, biases }
    }
}

fn dim_mismatch(expected: usize, got: usize) -> Error {
    Error::Config(format!("input has {got} features, network expects {expected}"))
}

/// Random matrix with orthonormal rows or columns (whichever is shorter), scaled by `gain`.
fn orthogonal<R: Rng + ?Sized>(rows: usize, cols: usize, gain: f64, rng: &mut R) -> Array2<f64> {
    let (n, len) = if rows >= cols { (cols, rows) } else { (rows, cols) };
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
    while basis.len() < n {
        let mut v: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
        // modified Gram-Schmidt
        for b in &basis {
            let proj: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= proj * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    Array2::from_shape_fn((rows, cols), |(r, c)| {
        if rows >= cols {
            gain * basis[c][r]
        } else {
            gain * basis[r][c]
        }
    })
}
