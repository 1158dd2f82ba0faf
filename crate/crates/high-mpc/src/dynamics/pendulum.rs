//! Pendulum-mounted gate.
//!
//! The gate hangs from a pivot on a rigid rod and swings in the world y-z
//! plane. The angle `θ` is measured from the straight-down rest pose, with
//! damped dynamics
//!
//! ```text
//! θ'' = -(g / L) sin θ - (b / m) θ'
//! ```
//!
//! [`pendulum_to_gate`] maps the angle onto the Cartesian pose the vehicle
//! tracks: the gate center swings on a circle of radius `L` below the pivot
//! and the gate plane rolls about the world x axis by `θ`.

use nalgebra::{Quaternion, SVector, Vector3};
use serde::{Deserialize, Serialize};

use super::integrate::integrate_pendulum_rk4;
use super::DynamicsError;
use crate::GRAVITY;

/// Pendulum angle (rad, zero hanging straight down) and angular rate (rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PendulumState {
    pub theta: f64,
    pub theta_dot: f64,
}

impl PendulumState {
    pub fn new(theta: f64, theta_dot: f64) -> Self {
        Self { theta, theta_dot }
    }

    pub fn is_finite(&self) -> bool {
        self.theta.is_finite() && self.theta_dot.is_finite()
    }
}

/// Geometry and physical constants of the swinging gate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PendulumParams {
    /// Fixed attachment point of the rod, world frame (m).
    pub pivot: Vector3<f64>,
    /// Rod length (m).
    pub length: f64,
    /// Viscous damping coefficient (N·m·s).
    pub damping: f64,
    /// Gate mass (kg).
    pub mass: f64,
}

impl Default for PendulumParams {
    fn default() -> Self {
        Self {
            pivot: Vector3::new(2.0, 0.0, 3.0),
            length: 2.0,
            damping: 0.4,
            mass: 2.0,
        }
    }
}

impl PendulumParams {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !self.pivot.iter().all(|x| x.is_finite()) {
            return Err(DynamicsError::NonFinite { field: "pivot" });
        }
        for (value, field) in [
            (self.length, "length"),
            (self.damping, "damping"),
            (self.mass, "mass"),
        ] {
            if !value.is_finite() {
                return Err(DynamicsError::NonFinite { field });
            }
        }
        if self.length <= 0.0 {
            return Err(DynamicsError::InvalidParam { field: "length", value: self.length });
        }
        if self.mass <= 0.0 {
            return Err(DynamicsError::InvalidParam { field: "mass", value: self.mass });
        }
        if self.damping < 0.0 {
            return Err(DynamicsError::InvalidParam { field: "damping", value: self.damping });
        }
        Ok(())
    }
}

/// Cartesian pose of the gate center, in the same layout as the vehicle
/// state so it can serve directly as a tracking reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    /// Roll about the world x axis by the pendulum angle.
    pub attitude: Quaternion<f64>,
}

impl GateState {
    /// Flatten to `[p, v, qw, qx, qy, qz]`.
    pub fn to_vector(&self) -> SVector<f64, 10> {
        SVector::<f64, 10>::from_column_slice(&[
            self.position.x,
            self.position.y,
            self.position.z,
            self.velocity.x,
            self.velocity.y,
            self.velocity.z,
            self.attitude.w,
            self.attitude.i,
            self.attitude.j,
            self.attitude.k,
        ])
    }
}

/// Time derivative `(θ', θ'')`.
pub fn pendulum_derivative(state: &PendulumState, params: &PendulumParams) -> (f64, f64) {
    let accel = -(GRAVITY / params.length) * state.theta.sin()
        - (params.damping / params.mass) * state.theta_dot;
    (state.theta_dot, accel)
}

/// Map the pendulum angle to the Cartesian gate pose.
///
/// The motion stays in the y-z plane through the pivot: the x coordinate is
/// fixed and carries no velocity.
pub fn pendulum_to_gate(state: &PendulumState, params: &PendulumParams) -> GateState {
    let (sin, cos) = state.theta.sin_cos();
    let l = params.length;
    let position = params.pivot + Vector3::new(0.0, l * sin, -l * cos);
    let velocity = Vector3::new(0.0, l * state.theta_dot * cos, l * state.theta_dot * sin);
    let half = 0.5 * state.theta;
    let attitude = Quaternion::new(half.cos(), half.sin(), 0.0, 0.0);
    GateState { position, velocity, attitude }
}

/// Roll out the free swing over `horizon_steps` steps of `dt`, returning
/// `horizon_steps + 1` states including the initial one.
pub fn simulate_pendulum(
    initial: &PendulumState,
    params: &PendulumParams,
    dt: f64,
    horizon_steps: usize,
) -> Vec<PendulumState> {
    let mut states = Vec::with_capacity(horizon_steps + 1);
    let mut state = *initial;
    states.push(state);
    for _ in 0..horizon_steps {
        state = integrate_pendulum_rk4(&state, params, dt);
        states.push(state);
    }
    states
}
