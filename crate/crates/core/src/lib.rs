pub mod attribution;
pub mod cli;
pub mod data;
pub mod domains;
pub mod error;
pub mod masking;
pub mod model;
pub mod protocol;
pub mod rng;
pub mod stochastic;
pub mod tasks;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
