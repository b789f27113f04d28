pub mod bench;
pub mod cli;
pub mod diffcore;
pub mod embedder;
pub mod error;
pub mod hypernet;
pub mod icnn;
pub mod params;
pub mod sampler;
pub mod solvers;
pub mod trainer;

pub use error::{Error, Result};
