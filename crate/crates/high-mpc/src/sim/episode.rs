//! One closed-loop flight: controller in the loop, RK4 ground truth
//! outside it.

use super::{Controller, EpisodeConfig, EpisodeLog, SimError, StepRecord, TerminalStatus};
use crate::deep_policy::{observe, Mlp};
use crate::dynamics::{integrate_pendulum_rk4, integrate_quad_rk4, pendulum_to_gate, QuadState};
use crate::mpc::{DecisionVariables, MpcError, MpcReference, MpcSolution, MpcSolver, TrackingMode};

/// States farther than this from the origin count as having left the
/// arena; the episode is then diverged, not merely off-course.
const ARENA_RADIUS: f64 = 20.0;

/// Fly one episode. `model` must be given exactly when the controller is
/// the learned policy.
///
/// Solver failures mid-flight end the episode as diverged with the log
/// collected so far; configuration errors surface as `Err` before any
/// step runs.
pub fn run_episode(config: &EpisodeConfig, model: Option<&Mlp>) -> Result<EpisodeLog, SimError> {
    config.validate()?;
    match (&config.controller, model) {
        (Controller::HighMpc, None) => return Err(SimError::ModelRequired),
        (Controller::StaticTraversal { .. } | Controller::StandardMpc, Some(_)) => {
            return Err(SimError::ModelUnused)
        }
        _ => {}
    }

    let mut mpc = config.mpc.clone();
    mpc.tracking_mode = match config.controller {
        Controller::StandardMpc => TrackingMode::Constant,
        _ => TrackingMode::TimeVarying,
    };
    let solver = MpcSolver::new(mpc.clone())?;
    let goal = QuadState::hover_at(config.goal_position);
    let t_max = 2.0 * mpc.horizon_seconds();

    let mut quad = config.initial_quad;
    let mut pendulum = config.initial_pendulum;
    let mut warm: Option<MpcSolution> = None;
    let mut steps = Vec::new();
    let mut status = TerminalStatus::Timeout;

    for k in 0..config.max_steps {
        let time = k as f64 * mpc.dt;
        let reference = MpcReference::from_pendulum(goal, &pendulum, &config.pendulum, &mpc);

        let t_tra = match &config.controller {
            Controller::HighMpc => {
                let o = observe(&quad, &reference.gate_trajectory[0]);
                Some(model.expect("checked above").forward(&o).clamp(0.0, t_max))
            }
            // Count down toward the fixed traversal instant.
            Controller::StaticTraversal { t_tra } => Some((t_tra - time).max(0.0)),
            Controller::StandardMpc => None,
        };

        let solution = match solver.solve(
            &quad,
            &DecisionVariables::new(t_tra.unwrap_or(0.0)),
            &reference,
            warm.as_ref(),
        ) {
            Ok(s) => s,
            Err(MpcError::NumericalFailure(reason)) => {
                log::warn!("solver failed at step {k} ({reason}); episode diverged");
                status = TerminalStatus::Diverged;
                break;
            }
            Err(e) => return Err(e.into()),
        };
        let command = solution.first_command(&mpc);

        steps.push(StepRecord {
            time,
            quad,
            gate: reference.gate_trajectory[0],
            command,
            t_tra,
            solve_time: solution.solve_time,
        });

        quad = integrate_quad_rk4(&quad, &command, mpc.dt).normalized();
        pendulum = integrate_pendulum_rk4(&pendulum, &config.pendulum, mpc.dt);
        warm = Some(solution);

        if !quad.is_finite() || quad.position.norm() > ARENA_RADIUS {
            status = TerminalStatus::Diverged;
            break;
        }
        if quad.position.x >= config.pendulum.pivot.x {
            status = TerminalStatus::Crossed;
            break;
        }
    }

    Ok(EpisodeLog {
        steps,
        final_quad: quad,
        final_gate: pendulum_to_gate(&pendulum, &config.pendulum),
        status,
    })
}
