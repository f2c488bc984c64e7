pub mod autodiff;
pub mod config;
pub mod error;
pub mod experiment;
pub mod kspace;
pub mod kten;
pub mod kunn;
pub mod metrics;
pub mod phantom;
pub mod theory;

pub use error::{KunnError, Result};
