pub mod baselines;
pub mod cluster_synth;
pub mod config;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod gbdt;
pub mod ingest;
pub mod matrix;
pub mod model_store;
pub mod parallel;
pub mod pipeline;
pub mod preprocess;
pub mod rng;
pub mod tuning;

pub use error::{Error, Result};
