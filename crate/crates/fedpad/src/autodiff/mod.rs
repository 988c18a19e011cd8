//! Reverse-mode automatic differentiation, the layer vocabulary, the four
//! training losses and the optimizers.

mod graph;
mod layers;
mod loss;
mod optim;

pub use graph::{Graph, NodeId};
pub use layers::{forward_stack, Layer, LayerKind};
pub use loss::{loss_cls, loss_depth, loss_diff, loss_rec};
pub use optim::{Optimizer, OptimizerKind};
