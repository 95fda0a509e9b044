//! Minimal feed-forward network engine: valid 2D convolutions, dense layers,
//! ReLU/tanh, fixed affine maps, exact backpropagation and Adam.
//!
//! Activations are batched row-wise (`batch × features`). Grid-shaped
//! activations are flattened height-major with channels innermost, which lets
//! a convolution run as one matrix product over unrolled patches.

mod adam;
mod network;
mod params;
mod spec;

pub use adam::{AdamConfig, AdamState};
pub use network::{Cache, GradRequest, Gradients, Network};
pub use params::{ParameterSet, Tensor};
pub use spec::{Architecture, GridShape, LayerSpec, NetworkSpec, OutputScaling};
