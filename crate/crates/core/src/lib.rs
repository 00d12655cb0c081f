pub mod analysis;
pub mod engine;
pub mod error;
pub mod ingest;
pub mod matrix;
pub mod nnls;
pub mod synth;

pub use error::{Error, Result};
