//! Minimal deterministic tensor engine: NCHW tensors, a reverse-mode tape,
//! parameter stores with Adam, and the convolutional building blocks used by
//! the three networks.

pub mod gradcheck;
mod graph;
mod layers;
mod params;
mod tensor;

pub use graph::{Grads, Graph, Var};
pub use layers::{Conv2d, DiscOutput, Linear, PatchDiscriminator, UNet};
pub use params::{Adam, ParamStore};
pub use tensor::{lit, Real, Tensor};
