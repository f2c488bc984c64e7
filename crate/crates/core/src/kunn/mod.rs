//! Tripled untrained generator: a full-size k-space decoder composed by
//! circular convolution with compact coil and phase spectra, fitted to the
//! measured samples of one scene.

mod decoder;
mod generator;
mod train;

pub use decoder::{sample_ball, DecoderConfig};
pub use generator::{
    forward_at, generator_forward, loss, module_outputs, Ablation, GeneratorGraph, ModuleOutputs, TripledGenerator, Weighting,
    XI_PARAM,
};
pub use train::{
    data_consistency, reconstruct, train, train_from, train_with_progress, Reconstruction, TrainedGenerator,
};

/// Iteration count and step size of the original method.
pub const DEFAULT_ITERS: usize = 1000;
pub const DEFAULT_LR: f64 = 1e-4;
