pub(crate) mod binio;
pub mod error;
pub mod eval;
pub mod features;
pub mod granularity;
pub mod mdnn;
pub mod pipeline;
pub mod reinforcement;
pub mod seed;
pub mod synth;
pub mod tokenizer;

pub use error::{Error, Result};
