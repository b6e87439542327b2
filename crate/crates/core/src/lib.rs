pub mod artifact;
pub mod charlm;
pub mod config;
pub mod corpus;
pub mod ensemble;
pub mod eval;
pub mod error;
pub mod optim;
pub mod segmenter;
pub mod synth;
pub mod thresholds;

pub use error::{Error, Result};
