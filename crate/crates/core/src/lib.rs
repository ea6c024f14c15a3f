pub mod bench;
pub mod compiler;
pub mod decomposition;
pub mod distfield;
pub mod error;
pub mod kernels;
pub mod runtime;
pub mod sparse;
pub mod symbolics;

pub use error::{Error, Result};
