//! Occlusion synthesis, gated-convolution face completion and biometric
//! evaluation, built on a small self-contained autodiff tensor library.

pub mod cli;
pub mod error;
pub mod gated;
pub mod imageio;
pub mod masks;
pub mod net;
pub mod recog;
pub mod render;
pub mod rng;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
