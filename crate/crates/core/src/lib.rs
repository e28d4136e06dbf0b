//! Mini-batch kernel k-means with row-parallel worker lanes.
//!
//! The pipeline splits the data into `B` batches, clusters each batch with a
//! kernelized gradient-descent loop (optionally restricted to a landmark
//! subset), and carries cluster medoids from batch to batch with a
//! count-weighted merge.

pub mod baselines;
pub mod cli;
pub mod collectives;
pub mod dataset;
pub mod engine;
pub mod error;
pub mod generate;
pub mod io;
pub mod kernels;
pub mod lifecycle;
pub mod metrics;
pub mod rng;
pub mod sampling;

pub use dataset::DataSet;
pub use error::{KkmError, Result};
pub use kernels::{KernelKind, KernelSpec};
pub use lifecycle::{run_clustering, RunConfig, RunOutput};
