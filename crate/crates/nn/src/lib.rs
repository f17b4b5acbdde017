//! Minimal dense tensor engine for desk-scale sequence models.
//!
//! Tensors are `f64`, row-major and rank 2. A [`Graph`] records operations
//! for reverse-mode differentiation; [`GruCell`] and [`Linear`] build on it
//! and [`Adam`] updates a [`ParamStore`].

pub mod checkpoint;
pub mod graph;
pub mod layers;
pub mod optim;
pub mod params;
pub mod tensor;

pub use checkpoint::Checkpoint;
pub use graph::{Gradients, Graph, Var};
pub use layers::{GruCell, Linear};
pub use optim::{Adam, AdamConfig};
pub use params::{Bound, ParamId, ParamStore};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value produced by {0}")]
    NonFinite(String),
    #[error("non-finite gradient for parameter {0}")]
    NonFiniteGrad(String),
    #[error("unknown parameter {0}")]
    UnknownParam(String),
    #[error("checkpoint format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = NnError> = std::result::Result<T, E>;
