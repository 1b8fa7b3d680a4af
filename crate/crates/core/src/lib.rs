pub mod blocks;
pub mod dataset;
pub mod error;
pub mod graph;
pub mod kernels;
pub mod losses;
pub mod metrics;
pub mod postprocess;
pub mod tensor;
pub mod weights;

pub use error::{Error, Result};
pub use tensor::Tensor;
