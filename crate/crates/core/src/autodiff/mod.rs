//! Minimal reverse-mode automatic differentiation.
//!
//! Everything the planners need fits a small, fixed primitive set; the graph
//! is built once per network and re-evaluated with fresh bindings, which keeps
//! evaluation pure and training deterministic.

mod adam;
mod checkpoint;
mod graph;
mod tensor;

pub use adam::{AdamHyper, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use graph::{Bindings, Evaluation, Gradients, Graph, NodeId};
pub use tensor::Tensor;
