pub mod blocks;
pub mod error;
pub mod features;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod tensor;
pub mod verify;

pub use error::{Error, Result};
pub use tensor::Tensor;
