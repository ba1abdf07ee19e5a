//! Constrained multi-objective architecture search for early-exit CNNs.
//!
//! The crate is organised bottom-up:
//!
//! - [`autodiff`]: a small tensor engine with a reverse-mode tape and optimizers.
//! - [`model`]: the genome search space, exit placement and the MAC cost model.
//! - [`train`]: staged training with the exit losses, thresholded inference,
//!   threshold tuning and calibration metrics.
//! - [`search`]: surrogate-assisted NSGA-II over genomes and the result archive.
//! - [`data`]: synthetic datasets and the CIFAR-10 binary format.
//! - [`report`]: run configuration, artifact persistence and report emission.
//!
//! Runnable walkthroughs for each capability live in `examples/`.

pub mod autodiff;
pub mod data;
pub mod error;
pub mod model;
pub mod report;
pub mod search;
pub mod train;

pub use error::{Error, Result};
