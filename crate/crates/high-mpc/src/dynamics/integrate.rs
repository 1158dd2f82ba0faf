//! Fixed-step integrators.
//!
//! The forward-Euler step is the discrete model the controller linearizes,
//! so it is the single source of truth for prediction; the RK4 step is the
//! higher-fidelity plant used when closing the loop. Both renormalize the
//! attitude quaternion after the update so unit norm survives arbitrarily
//! long rollouts.

use nalgebra::Quaternion;

use super::pendulum::{pendulum_derivative, PendulumParams, PendulumState};
use super::quadrotor::{quad_derivative_unchecked, QuadCommand, QuadDerivative, QuadState};

fn quad_step(state: &QuadState, d: &QuadDerivative, dt: f64) -> QuadState {
    QuadState {
        position: state.position + d.position * dt,
        velocity: state.velocity + d.velocity * dt,
        attitude: Quaternion::from_vector(state.attitude.coords + d.attitude.coords * dt),
    }
}

/// One forward-Euler step with zero-order-hold command, attitude
/// renormalized afterwards.
pub fn integrate_quad_euler(state: &QuadState, command: &QuadCommand, dt: f64) -> QuadState {
    let d = quad_derivative_unchecked(state, command);
    quad_step(state, &d, dt).normalized()
}

/// One classical Runge-Kutta (RK4) step with zero-order-hold command,
/// attitude renormalized afterwards.
pub fn integrate_quad_rk4(state: &QuadState, command: &QuadCommand, dt: f64) -> QuadState {
    let k1 = quad_derivative_unchecked(state, command);
    let k2 = quad_derivative_unchecked(&quad_step(state, &k1, 0.5 * dt), command);
    let k3 = quad_derivative_unchecked(&quad_step(state, &k2, 0.5 * dt), command);
    let k4 = quad_derivative_unchecked(&quad_step(state, &k3, dt), command);

    let combined = QuadDerivative {
        position: (k1.position + 2.0 * (k2.position + k3.position) + k4.position) / 6.0,
        velocity: (k1.velocity + 2.0 * (k2.velocity + k3.velocity) + k4.velocity) / 6.0,
        attitude: Quaternion::from_vector(
            (k1.attitude.coords
                + 2.0 * (k2.attitude.coords + k3.attitude.coords)
                + k4.attitude.coords)
                / 6.0,
        ),
    };
    quad_step(state, &combined, dt).normalized()
}

/// One forward-Euler step of the pendulum.
pub fn integrate_pendulum_euler(
    state: &PendulumState,
    params: &PendulumParams,
    dt: f64,
) -> PendulumState {
    let (dtheta, ddtheta) = pendulum_derivative(state, params);
    PendulumState {
        theta: state.theta + dt * dtheta,
        theta_dot: state.theta_dot + dt * ddtheta,
    }
}

/// One RK4 step of the pendulum.
pub fn integrate_pendulum_rk4(
    state: &PendulumState,
    params: &PendulumParams,
    dt: f64,
) -> PendulumState {
    let step = |s: &PendulumState, k: (f64, f64), h: f64| PendulumState {
        theta: s.theta + h * k.0,
        theta_dot: s.theta_dot + h * k.1,
    };
    let k1 = pendulum_derivative(state, params);
    let k2 = pendulum_derivative(&step(state, k1, 0.5 * dt), params);
    let k3 = pendulum_derivative(&step(state, k2, 0.5 * dt), params);
    let k4 = pendulum_derivative(&step(state, k3, dt), params);
    PendulumState {
        theta: state.theta + dt / 6.0 * (k1.0 + 2.0 * (k2.0 + k3.0) + k4.0),
        theta_dot: state.theta_dot + dt / 6.0 * (k1.1 + 2.0 * (k2.1 + k3.1) + k4.1),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::GRAVITY;
    use approx::assert_relative_eq;
    use nalgebra::Vector3;
    use proptest::prelude::*;

    #[test]
    fn hover_is_a_fixed_point_of_both_integrators() {
        let state = QuadState::hover_at(Vector3::new(0.5, 0.0, 2.0));
        let cmd = QuadCommand::hover();
        for next in [
            integrate_quad_euler(&state, &cmd, 0.04),
            integrate_quad_rk4(&state, &cmd, 0.04),
        ] {
            assert_relative_eq!(next.position, state.position, epsilon = 1e-12);
            assert_relative_eq!(next.velocity.norm(), 0.0, epsilon = 1e-12);
            assert_relative_eq!(next.attitude.w, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn one_euler_step_of_free_fall() {
        let state = QuadState::hover_at(Vector3::zeros());
        let cmd = QuadCommand::new(0.0, Vector3::zeros());
        let next = integrate_quad_euler(&state, &cmd, 0.04);
        // Velocity picks up -g*dt; position has not moved yet under Euler.
        assert_relative_eq!(next.velocity.z, -0.3924, epsilon = 1e-12);
        assert_relative_eq!(next.position.z, 0.0, epsilon = 1e-12);
    }

    /// Oracle: closed-form drop z(t) = -g t^2 / 2. Free fall is polynomial
    /// in time, which RK4 reproduces to round-off.
    #[test]
    fn rk4_free_fall_matches_closed_form() {
        let mut state = QuadState::hover_at(Vector3::zeros());
        let cmd = QuadCommand::new(0.0, Vector3::zeros());
        let dt = 0.001;
        for _ in 0..1000 {
            state = integrate_quad_rk4(&state, &cmd, dt);
        }
        assert_relative_eq!(state.position.z, -0.5 * GRAVITY, epsilon = 1e-9);
        assert_relative_eq!(state.velocity.z, -GRAVITY, epsilon = 1e-9);
    }

    /// Oracle: a hand-written Euler step with the quaternion product
    /// expanded term by term, independent of the model code.
    #[test]
    fn euler_step_matches_handwritten_formula() {
        let q = nalgebra::Quaternion::new(0.9, 0.2, -0.3, 0.1).normalize();
        let state = QuadState::new(
            Vector3::new(1.0, -0.5, 2.0),
            Vector3::new(0.3, 0.1, -0.2),
            q,
        );
        let cmd = QuadCommand::new(11.0, Vector3::new(0.5, -1.0, 0.25));
        let dt = 0.04;

        let (w, x, y, z) = (q.w, q.i, q.j, q.k);
        let (ox, oy, oz) = (cmd.body_rates.x, cmd.body_rates.y, cmd.body_rates.z);
        let acc = Vector3::new(
            2.0 * (w * y + x * z) * cmd.thrust,
            2.0 * (y * z - w * x) * cmd.thrust,
            (w * w - x * x - y * y + z * z) * cmd.thrust - GRAVITY,
        );
        let dq = [
            0.5 * (-x * ox - y * oy - z * oz),
            0.5 * (w * ox + y * oz - z * oy),
            0.5 * (w * oy - x * oz + z * ox),
            0.5 * (w * oz + x * oy - y * ox),
        ];
        let raw = [w + dt * dq[0], x + dt * dq[1], y + dt * dq[2], z + dt * dq[3]];
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();

        let next = integrate_quad_euler(&state, &cmd, dt);
        assert_relative_eq!(next.position, state.position + dt * state.velocity, epsilon = 1e-12);
        assert_relative_eq!(next.velocity, state.velocity + dt * acc, epsilon = 1e-12);
        assert_relative_eq!(next.attitude.w, raw[0] / norm, epsilon = 1e-12);
        assert_relative_eq!(next.attitude.i, raw[1] / norm, epsilon = 1e-12);
        assert_relative_eq!(next.attitude.j, raw[2] / norm, epsilon = 1e-12);
        assert_relative_eq!(next.attitude.k, raw[3] / norm, epsilon = 1e-12);
    }

    #[test]
    fn rk4_approaches_euler_as_dt_shrinks() {
        let state = QuadState::new(
            Vector3::new(0.0, 1.0, 2.0),
            Vector3::new(1.0, 0.0, 0.5),
            nalgebra::Quaternion::new(0.95, 0.1, 0.2, -0.1).normalize(),
        );
        let cmd = QuadCommand::new(10.0, Vector3::new(0.3, 0.3, -0.6));
        // The two schemes agree to first order, so their gap shrinks as dt².
        let dt = 1e-4;
        let a = integrate_quad_euler(&state, &cmd, dt);
        let b = integrate_quad_rk4(&state, &cmd, dt);
        assert_relative_eq!(a.position, b.position, epsilon = 1e-7);
        assert_relative_eq!(a.velocity, b.velocity, epsilon = 1e-7);
    }

    /// Oracle: undamped swing conserves E = (1 - cos θ) g L + L² θ'² / 2.
    #[test]
    fn undamped_pendulum_conserves_energy() {
        let params = PendulumParams { damping: 0.0, ..PendulumParams::default() };
        let energy = |s: &PendulumState| {
            (1.0 - s.theta.cos()) * GRAVITY * params.length
                + 0.5 * params.length * params.length * s.theta_dot * s.theta_dot
        };
        let mut state = PendulumState::new(1.2, 0.0);
        let e0 = energy(&state);
        for _ in 0..1000 {
            state = integrate_pendulum_rk4(&state, &params, 0.002);
            assert_relative_eq!(energy(&state), e0, epsilon = 1e-6);
        }
    }

    /// Oracle: one RK4 step agrees with 100 forward-Euler sub-steps of
    /// dt/100 to 1e-5, for both the vehicle and the pendulum.
    #[test]
    fn rk4_step_matches_fine_euler() {
        let state = QuadState::new(
            Vector3::new(0.2, -0.4, 1.8),
            Vector3::new(0.6, -0.3, 0.2),
            nalgebra::Quaternion::new(0.97, 0.1, -0.15, 0.05).normalize(),
        );
        let cmd = QuadCommand::new(11.0, Vector3::new(0.8, -0.5, 0.3));
        let dt = 0.01;

        let coarse = integrate_quad_rk4(&state, &cmd, dt);
        let mut fine = state;
        for _ in 0..100 {
            fine = integrate_quad_euler(&fine, &cmd, dt / 100.0);
        }
        assert_relative_eq!(coarse.position, fine.position, epsilon = 1e-5);
        assert_relative_eq!(coarse.velocity, fine.velocity, epsilon = 1e-5);
        assert_relative_eq!(coarse.attitude.coords, fine.attitude.coords, epsilon = 1e-5);

        let params = PendulumParams::default();
        let pstate = PendulumState::new(1.1, -0.7);
        let pcoarse = integrate_pendulum_rk4(&pstate, &params, dt);
        let mut pfine = pstate;
        for _ in 0..100 {
            pfine = integrate_pendulum_euler(&pfine, &params, dt / 100.0);
        }
        assert_relative_eq!(pcoarse.theta, pfine.theta, epsilon = 1e-5);
        assert_relative_eq!(pcoarse.theta_dot, pfine.theta_dot, epsilon = 1e-5);
    }

    #[test]
    fn pendulum_euler_matches_handwritten_formula() {
        let params = PendulumParams::default();
        let state = PendulumState::new(0.8, -0.6);
        let dt = 0.04;
        let next = integrate_pendulum_euler(&state, &params, dt);
        assert_relative_eq!(next.theta, 0.8 + dt * (-0.6), epsilon = 1e-15);
        assert_relative_eq!(
            next.theta_dot,
            -0.6 + dt * (-(GRAVITY / 2.0) * 0.8_f64.sin() - (0.4 / 2.0) * (-0.6)),
            epsilon = 1e-15
        );
    }

    proptest! {
        /// Unit quaternion norm survives long rollouts under both
        /// integrators for any in-range command.
        #[test]
        fn attitude_stays_unit_norm(
            qw in -1.0..1.0f64,
            qx in -1.0..1.0f64,
            qy in -1.0..1.0f64,
            qz in -1.0..1.0f64,
            thrust in 2.0..20.0f64,
            wx in -3.0..3.0f64,
            wy in -3.0..3.0f64,
            wz in -3.0..3.0f64,
            use_rk4 in proptest::bool::ANY,
        ) {
            let raw = nalgebra::Quaternion::new(qw, qx, qy, qz);
            prop_assume!(raw.norm() > 1e-3);
            let mut state = QuadState::new(Vector3::zeros(), Vector3::zeros(), raw.normalize());
            let cmd = QuadCommand::new(thrust, Vector3::new(wx, wy, wz));
            for _ in 0..50 {
                state = if use_rk4 {
                    integrate_quad_rk4(&state, &cmd, 0.04)
                } else {
                    integrate_quad_euler(&state, &cmd, 0.04)
                };
                prop_assert!((state.attitude.norm() - 1.0).abs() < 1e-9);
                prop_assert!(state.is_finite());
            }
        }
    }
}
