//! Analytic Jacobians of the discrete prediction step.
//!
//! The prediction model is the forward-Euler step *including* the final
//! quaternion renormalization, so the Jacobians chain the renormalization
//! projection `(I - r rᵀ)/‖e‖` (evaluated at the pre-normalization
//! quaternion `e`, with `r = e/‖e‖`) into the Euler-step derivative.
//! Getting this projection into the linearization matters: without it the
//! model the solver differentiates is not the model it rolls out.

use nalgebra::{Matrix4, Matrix4x3, SMatrix, Vector3, Vector4};

use crate::dynamics::{QuadCommand, QuadState};

pub type StateJacobian = SMatrix<f64, 10, 10>;
pub type CommandJacobian = SMatrix<f64, 10, 4>;

/// Columns of `∂(R(q) e_z)/∂q` in (w, x, y, z) order.
fn thrust_axis_jacobian(qw: f64, qx: f64, qy: f64, qz: f64) -> Matrix4<f64> {
    // Stored transposed for column access below; rows are d/d(w,x,y,z).
    Matrix4::new(
        2.0 * qy, -2.0 * qx, 2.0 * qw, 0.0,
        2.0 * qz, -2.0 * qw, -2.0 * qx, 0.0,
        2.0 * qw, 2.0 * qz, -2.0 * qy, 0.0,
        2.0 * qx, 2.0 * qy, 2.0 * qz, 0.0,
    )
}

/// Jacobians `A = ∂F/∂x`, `B = ∂F/∂u` of one Euler-plus-renormalization
/// step `F` at the given linearization point.
pub fn linearize_step(
    state: &QuadState,
    command: &QuadCommand,
    dt: f64,
) -> (StateJacobian, CommandJacobian) {
    let (qw, qx, qy, qz) = (state.attitude.w, state.attitude.i, state.attitude.j, state.attitude.k);
    let (ox, oy, oz) = (command.body_rates.x, command.body_rates.y, command.body_rates.z);
    let c = command.thrust;

    // Euler step without the renormalization: J = I + dt * df/d(x,u).
    let mut a = StateJacobian::identity();
    let mut b = CommandJacobian::zeros();

    // Position rows: dp/dt = v.
    for i in 0..3 {
        a[(i, 3 + i)] += dt;
    }

    // Velocity rows: dv/dt = c * R(q) e_z - g e_z.
    let axis_jac = thrust_axis_jacobian(qw, qx, qy, qz);
    for (col, q_index) in (6..10).enumerate() {
        for row in 0..3 {
            a[(3 + row, q_index)] += dt * c * axis_jac[(col, row)];
        }
    }
    let axis = Vector3::new(
        2.0 * (qw * qy + qx * qz),
        2.0 * (qy * qz - qw * qx),
        qw * qw - qx * qx - qy * qy + qz * qz,
    );
    for row in 0..3 {
        b[(3 + row, 0)] = dt * axis[row];
    }

    // Attitude rows: dq/dt = q ⊗ (0, ω) / 2.
    let dq_dq = 0.5
        * Matrix4::new(
            0.0, -ox, -oy, -oz,
            ox, 0.0, oz, -oy,
            oy, -oz, 0.0, ox,
            oz, oy, -ox, 0.0,
        );
    let dq_domega = 0.5
        * Matrix4x3::new(
            -qx, -qy, -qz,
            qw, -qz, qy,
            qz, qw, -qx,
            -qy, qx, qw,
        );
    for row in 0..4 {
        for col in 0..4 {
            a[(6 + row, 6 + col)] += dt * dq_dq[(row, col)];
        }
        for col in 0..3 {
            b[(6 + row, 1 + col)] = dt * dq_domega[(row, col)];
        }
    }

    // Chain the renormalization projection through the quaternion rows,
    // evaluated at the pre-normalization quaternion of this step.
    let raw = raw_quaternion(state, command, dt);
    let r = raw / raw.norm();
    let projection = (Matrix4::identity() - r * r.transpose()) / raw.norm();

    let mut a_q = SMatrix::<f64, 4, 10>::zeros();
    let mut b_q = SMatrix::<f64, 4, 4>::zeros();
    for row in 0..4 {
        for col in 0..10 {
            a_q[(row, col)] = a[(6 + row, col)];
        }
        for col in 0..4 {
            b_q[(row, col)] = b[(6 + row, col)];
        }
    }
    let a_q = projection * a_q;
    let b_q = projection * b_q;
    for row in 0..4 {
        for col in 0..10 {
            a[(6 + row, col)] = a_q[(row, col)];
        }
        for col in 0..4 {
            b[(6 + row, col)] = b_q[(row, col)];
        }
    }
    (a, b)
}

/// Pre-normalization quaternion of the Euler step, in (w, x, y, z) order.
fn raw_quaternion(state: &QuadState, command: &QuadCommand, dt: f64) -> Vector4<f64> {
    let (qw, qx, qy, qz) = (state.attitude.w, state.attitude.i, state.attitude.j, state.attitude.k);
    let (ox, oy, oz) = (command.body_rates.x, command.body_rates.y, command.body_rates.z);
    Vector4::new(
        qw + dt * 0.5 * (-qx * ox - qy * oy - qz * oz),
        qx + dt * 0.5 * (qw * ox + qy * oz - qz * oy),
        qy + dt * 0.5 * (qw * oy - qx * oz + qz * ox),
        qz + dt * 0.5 * (qw * oz + qx * oy - qy * ox),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::integrate_quad_euler;
    use crate::seeding::seeded_rng;
    use approx::assert_relative_eq;
    use nalgebra::SVector;
    use rand::Rng;

    /// Oracle: central finite differences of the actual integrator.
    #[test]
    fn jacobians_match_finite_differences_of_the_step() {
        let mut rng = seeded_rng(11);
        let dt = 0.04;
        for _ in 0..10 {
            let sv: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
            let q = nalgebra::Quaternion::new(
                rng.random_range(0.5..1.0),
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
            )
            .normalize();
            let state = QuadState::new(
                Vector3::new(sv[0], sv[1], sv[2]),
                Vector3::new(sv[3], sv[4], sv[5]),
                q,
            );
            let command = QuadCommand::new(
                rng.random_range(2.0..20.0),
                Vector3::new(
                    rng.random_range(-3.0..3.0),
                    rng.random_range(-3.0..3.0),
                    rng.random_range(-3.0..3.0),
                ),
            );

            let (a, b) = linearize_step(&state, &command, dt);

            let eps = 1e-7;
            for col in 0..10 {
                let mut up = state.to_vector();
                let mut down = state.to_vector();
                up[col] += eps;
                down[col] -= eps;
                let fu = integrate_quad_euler(&QuadState::from_vector(&up), &command, dt);
                let fd = integrate_quad_euler(&QuadState::from_vector(&down), &command, dt);
                let numeric = (fu.to_vector() - fd.to_vector()) / (2.0 * eps);
                for row in 0..10 {
                    assert_relative_eq!(a[(row, col)], numeric[row], epsilon = 1e-5, max_relative = 1e-5);
                }
            }
            for col in 0..4 {
                let mut up = command.to_vector();
                let mut down = command.to_vector();
                up[col] += eps;
                down[col] -= eps;
                let fu = integrate_quad_euler(&state, &QuadCommand::from_vector(&up), dt);
                let fd = integrate_quad_euler(&state, &QuadCommand::from_vector(&down), dt);
                let numeric = (fu.to_vector() - fd.to_vector()) / (2.0 * eps);
                for row in 0..10 {
                    assert_relative_eq!(b[(row, col)], numeric[row], epsilon = 1e-5, max_relative = 1e-5);
                }
            }
        }
    }

    /// The linear model must predict the true step to second order.
    #[test]
    fn linear_prediction_error_shrinks_quadratically() {
        let state = QuadState::new(
            Vector3::new(0.0, 1.0, 2.0),
            Vector3::new(0.5, -0.2, 0.1),
            nalgebra::Quaternion::new(0.95, 0.2, -0.1, 0.15).normalize(),
        );
        let command = QuadCommand::new(12.0, Vector3::new(0.7, -0.4, 0.2));
        let dt = 0.04;
        let (a, b) = linearize_step(&state, &command, dt);
        let base = integrate_quad_euler(&state, &command, dt).to_vector();

        let mut errors = Vec::new();
        for scale in [1e-2, 1e-3] {
            let dx = SVector::<f64, 10>::from_fn(|i, _| scale * (0.3 + 0.1 * i as f64));
            let du = SVector::<f64, 4>::from_fn(|i, _| scale * (0.2 - 0.05 * i as f64));
            let perturbed = integrate_quad_euler(
                &QuadState::from_vector(&(state.to_vector() + dx)),
                &QuadCommand::from_vector(&(command.to_vector() + du)),
                dt,
            );
            let predicted = base + a * dx + b * du;
            errors.push((perturbed.to_vector() - predicted).norm());
        }
        // 10x smaller perturbation should shrink the residual ~100x.
        assert!(errors[1] < errors[0] / 50.0, "errors: {:?}", errors);
    }
}
