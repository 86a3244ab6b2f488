//! Zero-shot multimodal style transfer for upper-body gesture synthesis.

pub mod autograd;
pub mod checkpoint;
pub mod cli;
pub mod data;
pub mod error;
pub mod export;
pub mod inference;
pub mod kv;
pub mod metrics;
pub mod model;
pub mod params;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, ErrorClass, Result};
