//! The three-part trajectory cost.
//!
//! Stages 0..H-1 pay a tracking penalty toward the gate pose and an action
//! penalty toward the hover command; stage H pays a terminal penalty toward
//! the hover goal. All three are diagonal quadratic forms; quaternion error
//! is a plain componentwise difference (initial attitudes stay on the
//! identity hemisphere, so the double cover never bites).

use nalgebra::SVector;

use super::{MpcConfig, MpcReference, TrackingMode};
use crate::dynamics::{QuadCommand, QuadState};

/// Diagonal gate-tracking weight at stage `h` for traversal time `t_tra`.
///
/// In the time-varying mode the peak weight is scaled by a Gaussian bump
/// `exp(-alpha * (h*dt - t_tra)^2)`, so stages near the planned traversal
/// instant care about the gate and the rest of the horizon is released to
/// pursue the goal. The constant mode applies the peak weight everywhere.
pub fn tracking_weight(h: usize, t_tra: f64, config: &MpcConfig) -> SVector<f64, 10> {
    match config.tracking_mode {
        TrackingMode::TimeVarying => {
            let offset = h as f64 * config.dt - t_tra;
            config.q_track_max * (-config.alpha * offset * offset).exp()
        }
        TrackingMode::Constant => config.q_track_max,
    }
}

fn quadratic(delta: &SVector<f64, 10>, weight: &SVector<f64, 10>) -> f64 {
    delta.zip_map(weight, |d, w| w * d * d).sum()
}

/// Cost contribution of stage `h`.
///
/// For `h < H` this is the tracking term plus the action term; at `h = H`
/// it is the terminal goal term and `command` is ignored (the horizon has
/// H commands for H+1 states).
pub fn stage_cost(
    state: &QuadState,
    command: &QuadCommand,
    h: usize,
    reference: &MpcReference,
    t_tra: f64,
    config: &MpcConfig,
) -> f64 {
    if h >= config.horizon_steps {
        let delta = state.to_vector() - reference.goal_state.to_vector();
        quadratic(&delta, &config.q_goal)
    } else {
        let delta = state.to_vector() - reference.gate_trajectory[h].to_vector();
        let du = command.to_vector() - QuadCommand::hover().to_vector();
        quadratic(&delta, &tracking_weight(h, t_tra, config))
            + du.zip_map(&config.q_action, |d, w| w * d * d).sum()
    }
}

/// Full objective of a candidate trajectory.
pub fn total_cost(
    states: &[QuadState],
    commands: &[QuadCommand],
    reference: &MpcReference,
    t_tra: f64,
    config: &MpcConfig,
) -> f64 {
    let h_max = config.horizon_steps;
    let mut cost = 0.0;
    for h in 0..h_max {
        cost += stage_cost(&states[h], &commands[h], h, reference, t_tra, config);
    }
    cost + stage_cost(&states[h_max], &QuadCommand::hover(), h_max, reference, t_tra, config)
}

/// Analytic gradient of [`total_cost`] with respect to every state and
/// command, in the same order. Diagonal quadratics differentiate to
/// `2 w ∘ δ` per block.
pub fn cost_gradient(
    states: &[QuadState],
    commands: &[QuadCommand],
    reference: &MpcReference,
    t_tra: f64,
    config: &MpcConfig,
) -> (Vec<SVector<f64, 10>>, Vec<SVector<f64, 4>>) {
    let h_max = config.horizon_steps;
    let u_r = QuadCommand::hover().to_vector();

    let mut state_grads = Vec::with_capacity(h_max + 1);
    for h in 0..h_max {
        let delta = states[h].to_vector() - reference.gate_trajectory[h].to_vector();
        let w = tracking_weight(h, t_tra, config);
        state_grads.push(2.0 * delta.component_mul(&w));
    }
    let terminal = states[h_max].to_vector() - reference.goal_state.to_vector();
    state_grads.push(2.0 * terminal.component_mul(&config.q_goal));

    let command_grads = commands
        .iter()
        .map(|u| 2.0 * (u.to_vector() - u_r).component_mul(&config.q_action))
        .collect();
    (state_grads, command_grads)
}
