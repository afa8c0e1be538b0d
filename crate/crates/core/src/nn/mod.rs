//! Multilayer perceptrons with batch normalization and hand-written
//! backward passes, plus the AdamW optimizer.

mod adamw;
mod mlp;
mod store;

pub use adamw::{clip_global_norm, AdamW, AdamWConfig, StepOutcome};
pub use mlp::{Mlp, MlpCache, MlpSpec, Mode, BN_EPS, BN_MOMENTUM, LEAKY_SLOPE};
pub use store::{count_parameters, ParameterStore};

use alloc::string::String;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NnError {
    /// Batch statistics are undefined for the given batch.
    #[error("batch statistics: {0}")]
    Stat(String),
    #[error("contract violation: {0}")]
    Contract(String),
}
