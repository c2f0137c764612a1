//! Dense tensors, a reverse-mode gradient tape, dense layers and optimizers.

pub mod checkpoint;
pub mod graph;
pub mod layer;
pub mod optim;
pub mod tensor;

pub use checkpoint::{Checkpoint, Manifest, NetworkArch};
pub use graph::{Gradients, Graph, Var, LOG_FLOOR};
pub use layer::{Activation, Bound, DenseLayer, Mlp};
pub use optim::{Optimizer, OptimizerConfig};
pub use tensor::Tensor;
