//! Bayesian latent mixture model for joint dimension reduction and clustering
//! of mixed binary and continuous data, fitted by Pólya-Gamma augmented Gibbs
//! sampling.

pub mod assignment;
pub mod baselines;
pub mod diagnostics;
pub mod error;
pub mod gibbs;
pub mod io;
pub mod metrics;
pub mod model;
pub mod pg;
pub mod predict;
pub mod rng;
pub mod selection;
pub mod sim;

pub use error::{MindsError, Result};
pub use gibbs::{run_chain, ChainResult};
pub use model::{MixedDataset, ModelConfig, ParameterState, Priors};
