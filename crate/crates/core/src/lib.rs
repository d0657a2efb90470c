pub mod capacity;
pub mod certify;
pub mod channels;
pub mod concentration;
pub mod entropy;
pub mod error;
pub mod linalg;
pub mod nets;
pub mod rng;

pub use error::{Error, Result};
