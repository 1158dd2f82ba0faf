//! Continuous-time quadrotor and pendulum-gate models with fixed-step
//! integrators.
//!
//! The same models back both the ground-truth simulator (RK4) and the MPC
//! internal prediction model (explicit Euler). All functions here are pure;
//! nothing holds shared mutable state.

mod integrate;
mod pendulum;
mod quadrotor;

pub use integrate::{
    integrate_pendulum_euler, integrate_pendulum_rk4, integrate_quad_euler, integrate_quad_rk4,
};
pub use pendulum::{
    pendulum_derivative, pendulum_to_gate, simulate_pendulum, GateState, PendulumParams,
    PendulumState,
};
pub use quadrotor::{quad_derivative, QuadCommand, QuadDerivative, QuadState};

use thiserror::Error;

/// Dimension of the flattened quadrotor / gate state vector.
pub const STATE_DIM: usize = 10;
/// Dimension of the flattened command vector.
pub const COMMAND_DIM: usize = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("non-finite value in {field}")]
    NonFinite { field: &'static str },
    #[error("invalid parameter {field}: {value}")]
    InvalidParam { field: &'static str, value: f64 },
}
