//! Federated multi-label classification over frozen text embeddings.
//!
//! Embedding vectors go through one of three small feed-forward classifiers
//! trained with a mixed BCE/focal objective, either centrally or with FedAvg
//! across simulated clients.

mod bytes;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod exec;
pub mod fedsim;
pub mod loss;
pub mod metrics;
pub mod models;
pub mod numkit;
pub mod synthgen;
pub mod train;

pub use error::{Error, Result};
