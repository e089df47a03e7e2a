pub mod cli;
pub mod data;
pub mod dsp;
pub mod error;
pub mod flops;
pub mod nn;
pub mod subband;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
