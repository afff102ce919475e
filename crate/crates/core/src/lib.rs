//! Multi-scale oversampling graph neural networks for imbalanced binary
//! graph classification: graph-level oversampling, pairwise relation
//! prediction, and subgraph-bag multiple-instance learning trained jointly
//! over shared graph encoders, plus the experiment harness around them.

pub mod checkpoint;
pub mod data;
pub mod encoder;
pub mod graph;
pub mod harness;
pub mod model;
pub mod sampling;
pub mod tensor;

pub use graph::{Graph, GraphDataset};
pub use tensor::{Tape, Tensor, Var};
