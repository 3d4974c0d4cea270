//! Small dense/1-D convolutional network engine: forward and reverse passes,
//! softmax cross-entropy and squared-error losses, Adam, mini-batch training,
//! finite-difference gradient checks and binary checkpoints.

pub mod adam;
pub mod arch;
pub mod checkpoint;
pub mod gradcheck;
pub mod loss;
pub mod network;
pub mod train;

pub use adam::Adam;
pub use arch::{dense_stack, ArchitectureSpec, LayerSpec, Shape};
pub use gradcheck::{gradient_check, GradCheckReport};
pub use loss::{Loss, Targets};
pub use network::{softmax_row, ForwardCache, Gradients, LayerParams, Network};
pub use train::{argmax, evaluate, train, train_network, Dataset, TargetData, TrainConfig, TrainHistory, TrainOutcome};
