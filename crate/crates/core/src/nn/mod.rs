//! Minimal dense feed-forward networks with manual backpropagation,
//! optimizers, trajectory recording and data ingestion. Everything else in
//! the crate analyzes the structures produced here.

pub mod arch;
pub mod data;
pub mod fisher;
pub mod idx;
pub mod net;
pub mod params;
pub mod train;

pub use arch::{Activation, ArchId, Head, NetworkArch};
pub use data::{DataSplits, DatasetKind, DatasetSpec, LabeledBatch, Targets};
pub use fisher::{conjugate_gradient, empirical_fisher, natural_gradient_step, FisherOperator};
pub use idx::{load_idx, read_idx_images, read_idx_labels};
pub use net::{accuracy, forward, grad, loss, per_example_grads};
pub use params::{init_params, ParamVector};
pub use train::{
    train, train_on_batch, OptimizerKind, TrainConfig, Trajectory, DIVERGENCE_THRESHOLD,
};
