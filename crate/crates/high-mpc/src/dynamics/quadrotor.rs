//! Quadrotor rigid-body model.
//!
//! State is position, velocity and a unit attitude quaternion (world from
//! body); commands are mass-normalized collective thrust and body rates:
//!
//! ```text
//! dp/dt = v
//! dv/dt = R(q) * [0, 0, c] - [0, 0, g]
//! dq/dt = 1/2 * q ⊗ (0, ω)
//! ```

use nalgebra::{Quaternion, SVector, Vector3};
use serde::{Deserialize, Serialize};

use super::DynamicsError;
use crate::GRAVITY;

/// Rigid-body state of the vehicle in the world frame.
///
/// The attitude quaternion is stored as (w, x, y, z) and kept unit-norm by
/// the integrators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadState {
    /// Position, meters.
    pub position: Vector3<f64>,
    /// Velocity, m/s.
    pub velocity: Vector3<f64>,
    /// World-from-body attitude quaternion.
    pub attitude: Quaternion<f64>,
}

/// Mass-normalized thrust (m/s^2) and body rates (rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadCommand {
    pub thrust: f64,
    pub body_rates: Vector3<f64>,
}

/// Time derivative of [`QuadState`].
#[derive(Debug, Clone, Copy)]
pub struct QuadDerivative {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub attitude: Quaternion<f64>,
}

impl QuadState {
    pub fn new(position: Vector3<f64>, velocity: Vector3<f64>, attitude: Quaternion<f64>) -> Self {
        Self { position, velocity, attitude }
    }

    /// Hover state: identity attitude, zero velocity.
    pub fn hover_at(position: Vector3<f64>) -> Self {
        Self {
            position,
            velocity: Vector3::zeros(),
            attitude: Quaternion::identity(),
        }
    }

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

    pub fn from_vector(v: &SVector<f64, 10>) -> Self {
        Self {
            position: Vector3::new(v[0], v[1], v[2]),
            velocity: Vector3::new(v[3], v[4], v[5]),
            attitude: Quaternion::new(v[6], v[7], v[8], v[9]),
        }
    }

    /// Renormalize the attitude quaternion.
    pub fn normalized(mut self) -> Self {
        let n = self.attitude.norm();
        if n > 0.0 {
            self.attitude = Quaternion::from_vector(self.attitude.coords / n);
        }
        self
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|x| x.is_finite())
    }

    /// Check finiteness and near-unit attitude norm (within `1e-6`).
    pub fn validate(&self) -> Result<(), DynamicsError> {
        for (v, field) in [
            (&self.position, "position"),
            (&self.velocity, "velocity"),
        ] {
            if !v.iter().all(|x| x.is_finite()) {
                return Err(DynamicsError::NonFinite { field });
            }
        }
        if !self.attitude.coords.iter().all(|x| x.is_finite()) {
            return Err(DynamicsError::NonFinite { field: "attitude" });
        }
        let n = self.attitude.norm();
        if (n - 1.0).abs() > 1e-6 {
            return Err(DynamicsError::InvalidParam { field: "attitude norm", value: n });
        }
        Ok(())
    }
}

impl QuadCommand {
    pub fn new(thrust: f64, body_rates: Vector3<f64>) -> Self {
        Self { thrust, body_rates }
    }

    /// The hover reference command `u_r = [g, 0, 0, 0]`.
    pub fn hover() -> Self {
        Self { thrust: GRAVITY, body_rates: Vector3::zeros() }
    }

    /// Flatten to `[c, ωx, ωy, ωz]`.
    pub fn to_vector(&self) -> SVector<f64, 4> {
        SVector::<f64, 4>::from_column_slice(&[
            self.thrust,
            self.body_rates.x,
            self.body_rates.y,
            self.body_rates.z,
        ])
    }

    pub fn from_vector(v: &SVector<f64, 4>) -> Self {
        Self { thrust: v[0], body_rates: Vector3::new(v[1], v[2], v[3]) }
    }

    pub fn is_finite(&self) -> bool {
        self.thrust.is_finite() && self.body_rates.iter().all(|x| x.is_finite())
    }
}

/// Body-frame z axis expressed in the world frame, i.e. the thrust
/// direction `R(q) * e_z`.
pub(crate) fn thrust_axis(q: &Quaternion<f64>) -> Vector3<f64> {
    let (w, x, y, z) = (q.w, q.i, q.j, q.k);
    Vector3::new(
        2.0 * (w * y + x * z),
        2.0 * (y * z - w * x),
        w * w - x * x - y * y + z * z,
    )
}

pub(crate) fn quad_derivative_unchecked(state: &QuadState, command: &QuadCommand) -> QuadDerivative {
    let acc = thrust_axis(&state.attitude) * command.thrust - Vector3::new(0.0, 0.0, GRAVITY);
    let product = state.attitude * Quaternion::from_parts(0.0, command.body_rates);
    let dq = Quaternion::from_vector(product.coords * 0.5);
    QuadDerivative {
        position: state.velocity,
        velocity: acc,
        attitude: dq,
    }
}

/// Continuous-time state derivative.
///
/// Errors on non-finite inputs, naming the offending field.
pub fn quad_derivative(
    state: &QuadState,
    command: &QuadCommand,
) -> Result<QuadDerivative, DynamicsError> {
    state.validate()?;
    if !command.thrust.is_finite() {
        return Err(DynamicsError::NonFinite { field: "thrust" });
    }
    if !command.body_rates.iter().all(|x| x.is_finite()) {
        return Err(DynamicsError::NonFinite { field: "body_rates" });
    }
    Ok(quad_derivative_unchecked(state, command))
}
