//! Trajectory-recording neural network training plus categorical and
//! topological analysis of the resulting loss landscapes.
//!
//! The crate is organized around a small set of structures:
//!
//! * [`nn`] trains dense feed-forward networks while recording full
//!   optimization trajectories ([`nn::Trajectory`]).
//! * [`category`] treats configurations as objects and trajectories as
//!   morphisms: composition, identities, the functor onto representation
//!   paths, and parameter averaging.
//! * [`homotopy`] decides whether two trajectories deform into each other
//!   under a loss-barrier threshold and partitions collections into
//!   classes.
//! * [`persistence`] samples loss landscapes and computes Rips and
//!   sublevel persistence diagrams, total persistence, and the
//!   persistence-to-generalization-gap model.
//! * [`repr`] fits affine alignments between representation snapshots and
//!   checks level-set fixed points.
//! * [`transfer`] reuses a trained encoder on a new domain through a
//!   domain morphism and verifies factorization quality.
//! * [`experiments`] packages the three end-to-end study protocols.

pub mod category;
pub mod error;
pub mod experiments;
pub mod homotopy;
pub mod linalg;
pub mod matrix;
pub mod nn;
pub mod persistence;
pub mod repr;
pub mod rng;
pub mod transfer;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use nn::{
    accuracy, forward, grad, init_params, loss, train, Activation, ArchId, DatasetKind,
    DatasetSpec, Head, LabeledBatch, NetworkArch, OptimizerKind, ParamVector, Targets,
    TrainConfig, Trajectory,
};
