//! Dense-network numerics: MLPs with reverse-mode gradients, categorical
//! heads, Adam and gradient clipping.

mod dist;
mod mlp;
mod optim;

pub use dist::{
    cross_entropy, cross_entropy_with_grad, log_softmax, log_softmax_rows, sample_action, softmax,
    CategoricalDist,
};
pub use mlp::{Activation, Dense, ForwardTrace, Grads, Mlp};
pub use optim::{anneal_fraction, clip_grad_norm, Adam, AdamConfig};
