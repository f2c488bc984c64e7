//! Reverse-mode automatic differentiation over real tensors, sized for the
//! small convolutional decoders used by the k-space generator.
//!
//! A [`Graph`] is built once from leaf parameters/constants and op nodes;
//! [`Graph::forward`] evaluates it and caches every intermediate value, and
//! [`Graph::backward`] returns the gradient of `<seed, root>` for each named
//! parameter. Complex data travel as real tensors whose leading channel axis
//! holds consecutive (re, im) pairs.

mod adam;
mod graph;
mod kernels;
mod tensor;

pub use adam::{ParamSet, ADAM_EPS, BETA1, BETA2};
pub use graph::{Graph, NodeId, NORM_EPS};
pub use tensor::RealTensor;
