//! Surrogate-assisted parallel tempering for Bayesian neural network
//! classifiers.
//!
//! [`model`] holds the classifier and its densities, [`tempering`] the
//! single-replica Metropolis machinery and replica exchange, [`surrogate`]
//! the neural likelihood estimator, and [`orchestrator`] runs the full
//! replica ensemble. [`data`] and [`registry`] load datasets;
//! [`diagnostics`] turns a finished run into accuracy summaries and files.

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod model;
pub mod orchestrator;
pub mod registry;
pub mod surrogate;
pub mod tempering;

pub use data::{CsvSchema, Dataset, Split};
pub use error::{Error, Result};
pub use model::{BnnModel, NetworkTopology, ParamVector, PriorConfig};
pub use orchestrator::{run, PosteriorChain, RunReport, SamplerConfig};
pub use surrogate::{LikelihoodSource, SurrogateModel};
pub use tempering::{LikelihoodModel, ProposalConfig, ProposalKind, TemperatureLadder};
