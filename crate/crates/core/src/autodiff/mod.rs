//! Minimal reverse-mode automatic differentiation over dense `f64` tensors.

mod graph;
mod optim;
mod params;
mod snapshot;
mod tensor;

pub use graph::{sigmoid, BackwardStats, Graph, Var};
pub use optim::{adam_update, Adam, AdamConfig, Moments};
pub use params::{ParamId, ParamStore, Parameter};
pub use snapshot::{ParamEntry, ParamSnapshot, SNAPSHOT_VERSION};
pub use tensor::Tensor;
