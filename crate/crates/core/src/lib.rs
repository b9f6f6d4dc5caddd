//! Federated averaging with progressive magnitude pruning.
//!
//! The controller aggregates learner updates weighted by local dataset size, prunes the
//! global model to a scheduled sparsity and broadcasts the model together with its binary
//! mask. Learners apply the mask at every SGD step so pruned parameters stay at zero.
//!
//! Alongside training the crate provides communication accounting, heterogeneous data
//! environments, a membership-inference audit and a CSR inference benchmark.

pub mod data;
pub mod error;
pub mod experiment;
pub mod federation;
pub mod model_file;
pub mod nn;
pub mod privacy;
pub mod sparse_bench;
pub mod sparsify;

pub use error::{Error, FormatError, Result};
pub use nn::{FlatParams, GradientVector, ModelSpec, Network};
pub use sparsify::{PruneMask, SparsitySchedule};
