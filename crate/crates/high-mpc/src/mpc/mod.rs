//! Receding-horizon trajectory optimizer.
//!
//! The controller transcribes a fixed-horizon optimal control problem with
//! a multiple-shooting scheme: every intermediate state and every command
//! is a decision unknown, consecutive states are tied by forward-Euler
//! dynamics defects, and commands live in a box. A damped Gauss-Newton
//! loop linearizes the defects, condenses the states out, and solves a
//! box-constrained quadratic program for the command update.
//!
//! The cost has three parts: a terminal quadratic pull toward a hover goal,
//! a time-varying quadratic pull toward the moving gate whose weight is a
//! Gaussian bump in time centered on the traversal time `t_tra`, and a
//! quadratic penalty on deviation from the hover command. `t_tra` is not
//! optimized here; it is the scalar decision variable a higher-level policy
//! chooses per solve.

mod cost;
mod linearize;
mod qp;
mod solver;

pub use cost::{cost_gradient, stage_cost, total_cost, tracking_weight};
pub use solver::MpcSolver;

use nalgebra::{SVector, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{
    pendulum_to_gate, simulate_pendulum, GateState, PendulumParams, PendulumState, QuadCommand,
    QuadState,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MpcError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("gate trajectory has {got} states, expected horizon + 1 = {want}")]
    ReferenceLength { got: usize, want: usize },
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error(transparent)]
    Dynamics(#[from] crate::dynamics::DynamicsError),
}

/// How the gate-tracking weight varies over the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackingMode {
    /// Gaussian bump in time centered on `t_tra` (the high-level variant).
    TimeVarying,
    /// The full tracking weight at every stage (the standard baseline).
    Constant,
}

/// Horizon, cost weights, command bounds and solver knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcConfig {
    /// Number of control intervals H; the trajectory has H+1 states.
    pub horizon_steps: usize,
    /// Control interval length, seconds.
    pub dt: f64,
    /// Diagonal terminal weight on the 10-dim state error to the goal.
    pub q_goal: SVector<f64, 10>,
    /// Peak diagonal weight on the 10-dim state error to the gate.
    pub q_track_max: SVector<f64, 10>,
    /// Diagonal weight on the 4-dim command error to hover.
    pub q_action: SVector<f64, 4>,
    /// Temporal spread of the tracking bump; larger is narrower.
    pub alpha: f64,
    /// Thrust bounds, m/s².
    pub c_min: f64,
    pub c_max: f64,
    /// Symmetric body-rate bounds, rad/s.
    pub omega_max: Vector3<f64>,
    pub sqp_max_iters: usize,
    /// Convergence threshold on step norm / cost decrease.
    pub sqp_tol: f64,
    /// Initial Levenberg damping added to the condensed Hessian.
    pub levenberg_damping: f64,
    pub tracking_mode: TrackingMode,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            horizon_steps: 50,
            dt: 0.04,
            q_goal: SVector::<f64, 10>::from_column_slice(&[
                100.0, 100.0, 100.0, 10.0, 10.0, 10.0, 10.0, 10.0, 10.0, 10.0,
            ]),
            q_track_max: SVector::<f64, 10>::from_column_slice(&[
                0.0, 100.0, 100.0, 0.0, 10.0, 10.0, 0.0, 0.0, 0.0, 0.0,
            ]),
            q_action: SVector::<f64, 4>::from_column_slice(&[0.1, 0.1, 0.1, 0.1]),
            alpha: 10.0,
            c_min: 2.0,
            c_max: 20.0,
            omega_max: Vector3::new(3.0, 3.0, 3.0),
            sqp_max_iters: 80,
            sqp_tol: 1e-4,
            levenberg_damping: 1e-3,
            tracking_mode: TrackingMode::TimeVarying,
        }
    }
}

impl MpcConfig {
    /// Horizon length in seconds, `T = H · dt`.
    pub fn horizon_seconds(&self) -> f64 {
        self.horizon_steps as f64 * self.dt
    }

    pub fn validate(&self) -> Result<(), MpcError> {
        if self.horizon_steps < 2 {
            return Err(MpcError::InvalidConfig(format!(
                "horizon_steps must be at least 2, got {}",
                self.horizon_steps
            )));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(MpcError::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        if self.q_goal.iter().chain(self.q_track_max.iter()).chain(self.q_action.iter()).any(|w| !(*w >= 0.0) || !w.is_finite())
        {
            return Err(MpcError::InvalidConfig("cost weights must be finite and nonnegative".into()));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(MpcError::InvalidConfig(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.c_min < self.c_max) {
            return Err(MpcError::InvalidConfig(format!(
                "thrust bounds must satisfy c_min < c_max, got [{}, {}]",
                self.c_min, self.c_max
            )));
        }
        if self.omega_max.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(MpcError::InvalidConfig("omega_max must be finite and nonnegative".into()));
        }
        if self.sqp_max_iters == 0 {
            return Err(MpcError::InvalidConfig("sqp_max_iters must be at least 1".into()));
        }
        if !(self.sqp_tol > 0.0) || !(self.levenberg_damping > 0.0) {
            return Err(MpcError::InvalidConfig(
                "sqp_tol and levenberg_damping must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Clamp a command into the box, component by component.
    pub fn clamp_command(&self, command: &QuadCommand) -> QuadCommand {
        QuadCommand {
            thrust: command.thrust.clamp(self.c_min, self.c_max),
            body_rates: Vector3::new(
                command.body_rates.x.clamp(-self.omega_max.x, self.omega_max.x),
                command.body_rates.y.clamp(-self.omega_max.y, self.omega_max.y),
                command.body_rates.z.clamp(-self.omega_max.z, self.omega_max.z),
            ),
        }
    }
}

/// High-level decision variables handed down to each solve. Currently the
/// scalar traversal time; kept as a struct so the policy layer can grow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionVariables {
    /// When along the horizon the vehicle should coincide with the gate,
    /// seconds from now. Meaningful range is `[0, 2T]`.
    pub t_tra: f64,
}

impl DecisionVariables {
    pub fn new(t_tra: f64) -> Self {
        Self { t_tra }
    }

    /// Clamp into `[0, 2T]`, logging rather than rejecting: policy
    /// samples routinely stray past the ends and must remain solvable.
    pub fn clamped(&self, config: &MpcConfig) -> Self {
        let max = 2.0 * config.horizon_seconds();
        if self.t_tra < 0.0 || self.t_tra > max {
            log::debug!("traversal time {} outside [0, {}], clamping", self.t_tra, max);
            Self { t_tra: self.t_tra.clamp(0.0, max) }
        } else {
            *self
        }
    }
}

/// What the controller steers toward: a hover goal plus the predicted gate
/// motion over the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcReference {
    /// Terminal hover pose.
    pub goal_state: QuadState,
    /// Predicted gate poses at stages 0..=H.
    pub gate_trajectory: Vec<GateState>,
}

impl MpcReference {
    pub fn new(goal_state: QuadState, gate_trajectory: Vec<GateState>) -> Self {
        Self { goal_state, gate_trajectory }
    }

    /// Predict the gate forward from its current state and build the
    /// reference for one solve.
    pub fn from_pendulum(
        goal_state: QuadState,
        pendulum: &PendulumState,
        params: &PendulumParams,
        config: &MpcConfig,
    ) -> Self {
        let gate_trajectory = simulate_pendulum(pendulum, params, config.dt, config.horizon_steps)
            .iter()
            .map(|s| pendulum_to_gate(s, params))
            .collect();
        Self { goal_state, gate_trajectory }
    }

    pub fn validate(&self, config: &MpcConfig) -> Result<(), MpcError> {
        let want = config.horizon_steps + 1;
        if self.gate_trajectory.len() != want {
            return Err(MpcError::ReferenceLength { got: self.gate_trajectory.len(), want });
        }
        Ok(())
    }
}

/// An optimized trajectory: H+1 states, H commands, and solver diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpcSolution {
    pub states: Vec<QuadState>,
    pub commands: Vec<QuadCommand>,
    /// Objective value of the returned trajectory.
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Wall-clock solve time, seconds.
    pub solve_time: f64,
    /// Merit value of the initial guess and of each accepted iterate;
    /// non-increasing by the acceptance rule.
    pub cost_history: Vec<f64>,
}

impl MpcSolution {
    /// The command to apply this control interval, clamped to bounds.
    pub fn first_command(&self, config: &MpcConfig) -> QuadCommand {
        config.clamp_command(&self.commands[0])
    }
}

/// Free-function form of [`MpcSolution::first_command`].
pub fn first_command(solution: &MpcSolution, config: &MpcConfig) -> QuadCommand {
    solution.first_command(config)
}
