use thiserror::Error;

use crate::eig::EigError;
use crate::mesh::MeshError;
use crate::nn::NnError;
use crate::tasks::TaskError;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Any failure raised by the pipeline.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Eig(#[from] EigError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Task(#[from] TaskError),
    /// Shapes handed to a routine disagree with what its caches or inputs imply.
    #[error("contract violation: {0}")]
    Contract(alloc::string::String),
}
