//! High-MPC: a quadrotor model predictive controller whose traversal-time
//! decision variable is selected by a learned high-level policy.
//!
//! The crate is organized along the pipeline:
//!
//! - [`dynamics`]: continuous-time quadrotor and pendulum-gate models plus
//!   fixed-step integrators (Euler for the MPC internal model, RK4 for the
//!   ground-truth simulator).
//! - [`mpc`]: multiple-shooting transcription of the gate-traversal problem
//!   and a damped Gauss-Newton SQP solver with box constraints on commands.
//! - [`policy_search`]: episode-based probabilistic search over the MPC
//!   traversal time via exponential reward weighting and closed-form
//!   weighted maximum-likelihood updates.
//! - [`deep_policy`]: self-supervised collection of (observation, traversal
//!   time) pairs and a small fully-connected network trained to predict the
//!   traversal time online.
//! - [`sim`]: closed-loop episode harness, traversal metrics, and the
//!   High-MPC vs. standard-MPC comparison.

pub mod deep_policy;
pub mod dynamics;
pub mod mpc;
pub mod policy_search;
pub mod seeding;
pub mod sim;

/// Gravitational acceleration, m/s^2.
pub const GRAVITY: f64 = 9.81;
