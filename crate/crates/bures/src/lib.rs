pub mod analytic;
pub mod error;
pub mod harness;
pub mod kickedtop;
pub mod matrix;
pub mod sampler;
pub mod specfun;
pub mod states;

pub use error::{Error, Result};
