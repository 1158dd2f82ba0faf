//! Learned high-level policy: a small network that predicts the traversal
//! time directly from the current state, replacing the per-step search
//! once trained.
//!
//! The pipeline has three stages. [`collect`](collect::collect) runs the
//! traversal-time search inside randomized closed-loop episodes and logs
//! `(observation, t_tra)` pairs; [`train`](train::train) fits the
//! [`Mlp`] to those pairs by backpropagation; at run time
//! [`Mlp::forward`] turns the current observation into the traversal
//! time handed to the trajectory optimizer.
//!
//! The observation is the componentwise difference between the vehicle
//! state and the gate state — the network sees where the gate is
//! relative to itself, never absolute coordinates, so one trained model
//! covers every placement of the same scenario geometry.

mod collect;
mod dataset;
mod mlp;
mod train;

pub use collect::{collect, random_initial_conditions, CollectConfig};
pub use dataset::{load_dataset, save_dataset, Dataset, DatasetRecord};
pub use mlp::{load_model, save_model, Mlp};
pub use train::{train, TrainConfig, TrainHistory};

use nalgebra::SVector;
use thiserror::Error;

use crate::dynamics::{GateState, QuadState};
use crate::mpc::MpcError;
use crate::policy_search::SearchError;

/// What the network sees: vehicle state minus gate state, flattened to
/// `[Δp, Δv, Δq]`.
pub type Observation = SVector<f64, 10>;

/// Build the relative observation for the current instant.
pub fn observe(quad: &QuadState, gate: &GateState) -> Observation {
    quad.to_vector() - gate.to_vector()
}

#[derive(Debug, Error)]
pub enum DeepPolicyError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    NonFiniteLoss { epoch: usize, loss: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Mpc(#[from] MpcError),
    #[error(transparent)]
    Search(#[from] SearchError),
}
