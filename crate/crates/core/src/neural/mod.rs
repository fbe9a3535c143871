//! Dense networks with exact reverse-mode gradients and an Adam optimizer,
//! in double precision throughout.

mod adam;
mod dense;

pub use adam::{AdamConfig, AdamState};
pub use dense::{Activation, DenseLayer, DenseNet, ForwardTrace, Gradients};
