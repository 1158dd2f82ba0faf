//! Damped Gauss-Newton iteration over the shooting variables.
//!
//! Each iteration linearizes the Euler-step defects around the current
//! shooting trajectory, eliminates the state increments through the
//! linearized dynamics (condensing), and solves a box-constrained QP in
//! the command increments alone. A Levenberg diagonal damps the QP
//! Hessian and adapts to the ratio of actual to predicted decrease of a
//! merit function (objective plus an L1 penalty on the defects).
//! Candidate iterates step the commands and re-roll the states through
//! the real dynamics, so every accepted trajectory satisfies the
//! discrete dynamics exactly; the defect terms only carry the initial
//! guess, whose shifted or interpolated states violate them.

use std::time::Instant;

use nalgebra::{DMatrix, DVector, SVector, Vector3};

use super::cost::{total_cost, tracking_weight};
use super::linearize::{linearize_step, CommandJacobian, StateJacobian};
use super::qp::{solve_box_qp_warm, QpError, Status};
use super::{DecisionVariables, MpcConfig, MpcError, MpcReference, MpcSolution};
use crate::dynamics::{integrate_quad_euler, QuadCommand, QuadState};

/// Weight of the L1 defect penalty inside the merit function.
const MERIT_DEFECT_WEIGHT: f64 = 1e3;
/// Largest dynamics defect tolerated when declaring convergence.
const DEFECT_TOL: f64 = 1e-7;
const LAMBDA_MAX: f64 = 1e9;
const LAMBDA_MIN: f64 = 1e-8;

/// A single-threaded solver instance. Holds only configuration, so moving
/// it between threads is free; run one instance per concurrent problem.
#[derive(Debug, Clone)]
pub struct MpcSolver {
    config: MpcConfig,
}

impl MpcSolver {
    pub fn new(config: MpcConfig) -> Result<Self, MpcError> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &MpcConfig {
        &self.config
    }

    /// Optimize a trajectory from `initial` toward the reference, with the
    /// tracking bump placed at `z.t_tra`. A warm start is shifted by one
    /// stage; without one the solver cold-starts from a straight-line
    /// interpolation flown at hover command.
    pub fn solve(
        &self,
        initial: &QuadState,
        z: &DecisionVariables,
        reference: &MpcReference,
        warm_start: Option<&MpcSolution>,
    ) -> Result<MpcSolution, MpcError> {
        let guess = initial_guess(initial, reference, &self.config, warm_start);
        self.run(initial, z, reference, guess)
    }

    /// Re-solve the same horizon starting from an existing solution's
    /// trajectory, without the one-stage shift `solve` applies to a warm
    /// start. Meant for repeated solves of one scenario where only the
    /// traversal time moves, as in the traversal-time search.
    pub fn solve_with_guess(
        &self,
        initial: &QuadState,
        z: &DecisionVariables,
        reference: &MpcReference,
        guess: &MpcSolution,
    ) -> Result<MpcSolution, MpcError> {
        let config = &self.config;
        let h_max = config.horizon_steps;
        let trajectory = if guess.states.len() == h_max + 1 && guess.commands.len() == h_max {
            let mut states = guess.states.clone();
            states[0] = *initial;
            let commands = guess.commands.iter().map(|c| config.clamp_command(c)).collect();
            (states, commands)
        } else {
            log::warn!("guess dimensions do not match the horizon; cold-starting instead");
            initial_guess(initial, reference, config, None)
        };
        self.run(initial, z, reference, trajectory)
    }

    fn run(
        &self,
        initial: &QuadState,
        z: &DecisionVariables,
        reference: &MpcReference,
        guess: (Vec<QuadState>, Vec<QuadCommand>),
    ) -> Result<MpcSolution, MpcError> {
        let start = Instant::now();
        let config = &self.config;
        initial.validate()?;
        reference.validate(config)?;
        let t_tra = z.clamped(config).t_tra;

        let h_max = config.horizon_steps;
        let n = 4 * h_max;

        let (mut states, mut commands) = guess;

        let refs: Vec<SVector<f64, 10>> =
            (0..h_max).map(|h| reference.gate_trajectory[h].to_vector()).collect();
        let goal = reference.goal_state.to_vector();

        let mut ds = compute_defects(&states, &commands, config.dt);
        let mut merit_now = merit_value(&states, &commands, &ds, reference, t_tra, config);
        if !merit_now.is_finite() {
            return Err(MpcError::NumericalFailure("non-finite merit at the initial guess".into()));
        }
        let mut cost_history = vec![merit_now];
        let mut lambda = config.levenberg_damping;
        let mut converged = false;
        let mut iterations = 0;
        // Working-set memory for the QP: the active bounds barely change
        // between SQP iterations, so re-seeding skips most factorizations.
        let mut qp_hint: Vec<Status> = Vec::new();

        'sqp: for _ in 0..config.sqp_max_iters {
            iterations += 1;

            let mut a_mats: Vec<StateJacobian> = Vec::with_capacity(h_max);
            let mut b_mats: Vec<CommandJacobian> = Vec::with_capacity(h_max);
            for h in 0..h_max {
                let (a, b) = linearize_step(&states[h], &commands[h], config.dt);
                if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
                    return Err(MpcError::NumericalFailure("non-finite linearization".into()));
                }
                a_mats.push(a);
                b_mats.push(b);
            }

            // Zero-step state corrections: the increment each state picks
            // up from closing the defects alone.
            let mut w = vec![SVector::<f64, 10>::zeros(); h_max + 1];
            for h in 0..h_max {
                w[h + 1] = a_mats[h] * w[h] + ds[h];
            }

            let (mut h0, g0) = condensed_model(
                &states, &commands, &a_mats, &b_mats, &w, &refs, &goal, t_tra, config,
            );
            let diag0 = h0.diagonal();

            // Bounds on the increment keep the absolute command in its box.
            let mut lb = DVector::zeros(n);
            let mut ub = DVector::zeros(n);
            for h in 0..h_max {
                let u = &commands[h];
                lb[4 * h] = (config.c_min - u.thrust).min(0.0);
                ub[4 * h] = (config.c_max - u.thrust).max(0.0);
                for i in 0..3 {
                    lb[4 * h + 1 + i] = (-config.omega_max[i] - u.body_rates[i]).min(0.0);
                    ub[4 * h + 1 + i] = (config.omega_max[i] - u.body_rates[i]).max(0.0);
                }
            }

            'damping: loop {
                // Damp in place: only the diagonal moves between attempts.
                for i in 0..n {
                    h0[(i, i)] = diag0[i] + lambda;
                }
                let du = match solve_box_qp_warm(&h0, &g0, &lb, &ub, &mut qp_hint) {
                    Ok(x) => x,
                    Err(QpError::NotPositiveDefinite) => {
                        lambda *= 10.0;
                        if lambda > LAMBDA_MAX {
                            break 'sqp;
                        }
                        continue;
                    }
                    Err(e) => return Err(MpcError::NumericalFailure(e.to_string())),
                };
                if du.iter().any(|v| !v.is_finite()) {
                    return Err(MpcError::NumericalFailure("non-finite QP step".into()));
                }
                let step_norm = du.amax();

                if step_norm < config.sqp_tol && max_defect(&ds) <= DEFECT_TOL {
                    converged = true;
                    break 'sqp;
                }

                // Candidate: step the commands, then roll the states out
                // through the real dynamics. The rollout closes every defect
                // exactly, so the defect penalty cannot creep back in through
                // the second-order terms a linear state expansion would leave
                // open — that leak otherwise pins the damping high and stalls
                // the tail of the iteration.
                let mut new_commands = commands.clone();
                for h in 0..h_max {
                    let v = commands[h].to_vector() + command_block(&du, h);
                    new_commands[h] = snap_to_bounds(&QuadCommand::from_vector(&v), config);
                }
                let mut new_states = Vec::with_capacity(h_max + 1);
                new_states.push(states[0]);
                for h in 0..h_max {
                    new_states.push(integrate_quad_euler(&new_states[h], &new_commands[h], config.dt));
                }
                let rollout_ok = new_states.iter().all(|s| s.is_finite());
                let new_merit = if rollout_ok {
                    // Defects are identically zero on a rolled-out candidate.
                    total_cost(&new_states, &new_commands, reference, t_tra, config)
                } else {
                    f64::INFINITY
                };

                if new_merit.is_finite() && new_merit < merit_now - 1e-12 {
                    let decrease = merit_now - new_merit;
                    // The model predicts the cost change g·du + du·H·du/2
                    // and a complete closure of the defect penalty. Undo the
                    // damping first: the prediction uses the plain Hessian.
                    for i in 0..n {
                        h0[(i, i)] = diag0[i];
                    }
                    let model_cost_delta =
                        g0.dot(&du) + 0.5 * (du.transpose() * &h0 * &du)[(0, 0)];
                    let predicted = -model_cost_delta + MERIT_DEFECT_WEIGHT * defect_l1(&ds);
                    let ratio = if predicted > 0.0 { decrease / predicted } else { 1.0 };
                    log::trace!(
                        "accepted it={iterations} lambda={lambda:.1e} ratio={ratio:.2} \
                         step={step_norm:.2e} merit={new_merit:.4}"
                    );
                    states = new_states;
                    commands = new_commands;
                    ds = vec![SVector::<f64, 10>::zeros(); h_max];
                    merit_now = new_merit;
                    cost_history.push(merit_now);
                    if ratio > 0.75 {
                        lambda = (lambda / 3.0).max(LAMBDA_MIN);
                    } else if ratio < 0.25 {
                        lambda = (lambda * 4.0).min(LAMBDA_MAX);
                    }
                    if step_norm < config.sqp_tol || decrease < config.sqp_tol {
                        converged = true;
                        break 'sqp;
                    }
                    break 'damping;
                }
                lambda *= 10.0;
                if lambda > LAMBDA_MAX {
                    break 'sqp;
                }
            }
        }

        // Re-roll the states from the returned commands so the trajectory
        // satisfies the discrete dynamics exactly, whatever path the
        // iteration took to get here.
        let mut final_states = Vec::with_capacity(h_max + 1);
        final_states.push(*initial);
        for h in 0..h_max {
            let next = integrate_quad_euler(&final_states[h], &commands[h], config.dt);
            if !next.is_finite() {
                return Err(MpcError::NumericalFailure("non-finite final rollout".into()));
            }
            final_states.push(next);
        }
        let cost = total_cost(&final_states, &commands, reference, t_tra, config);

        Ok(MpcSolution {
            states: final_states,
            commands,
            cost,
            iterations,
            converged,
            solve_time: start.elapsed().as_secs_f64(),
            cost_history,
        })
    }
}

fn command_block(du: &DVector<f64>, h: usize) -> SVector<f64, 4> {
    SVector::<f64, 4>::new(du[4 * h], du[4 * h + 1], du[4 * h + 2], du[4 * h + 3])
}

/// Quadratic model of the linearized trajectory cost over the command
/// increments: `J_lin(du) - J_lin(0) = g0·du + du'·h0·du / 2`. States are
/// eliminated via `δx_s = Σ_k Φ(s,k+1) B_k δu_k + w_s`; the running
/// `cols[k]` holds the stage-s sensitivity `Φ(s,k+1)·B_k`, updated in
/// place as `s` advances.
#[allow(clippy::too_many_arguments)]
fn condensed_model(
    states: &[QuadState],
    commands: &[QuadCommand],
    a_mats: &[StateJacobian],
    b_mats: &[CommandJacobian],
    w: &[SVector<f64, 10>],
    refs: &[SVector<f64, 10>],
    goal: &SVector<f64, 10>,
    t_tra: f64,
    config: &MpcConfig,
) -> (DMatrix<f64>, DVector<f64>) {
    let h_max = config.horizon_steps;
    let n = 4 * h_max;
    let u_r = QuadCommand::hover().to_vector();

    let mut h0 = DMatrix::<f64>::zeros(n, n);
    let mut g0 = DVector::<f64>::zeros(n);
    for h in 0..h_max {
        let du = commands[h].to_vector() - u_r;
        for i in 0..4 {
            h0[(4 * h + i, 4 * h + i)] += 2.0 * config.q_action[i];
            g0[4 * h + i] += 2.0 * config.q_action[i] * du[i];
        }
    }

    let mut cols: Vec<CommandJacobian> = Vec::with_capacity(h_max);
    for s in 1..=h_max {
        for col in cols.iter_mut() {
            *col = a_mats[s - 1] * *col;
        }
        cols.push(b_mats[s - 1]);
        let (qs, rs) = if s < h_max {
            (tracking_weight(s, t_tra, config), &refs[s])
        } else {
            (config.q_goal, goal)
        };
        if qs.amax() < 1e-14 {
            continue;
        }
        // Only rows with nonzero weight contribute; the tracking weight
        // is sparse (y, z and their velocities), so restricting the sums
        // to those rows cuts most of the work in this O(H²) hot spot.
        let active: Vec<usize> = (0..10).filter(|&r| qs[r] != 0.0).collect();
        let eps_s = states[s].to_vector() + w[s] - rs;
        for k in 0..s {
            let ck = &cols[k];
            let mut gv = [0.0; 4];
            for &r in &active {
                let we = qs[r] * eps_s[r];
                for c in 0..4 {
                    gv[c] += ck[(r, c)] * we;
                }
            }
            for c in 0..4 {
                g0[4 * k + c] += 2.0 * gv[c];
            }
            for j in 0..=k {
                let cj = &cols[j];
                // m[a][b] = Σ_r cj[r,a] · qs[r] · ck[r,b]
                let mut m = [[0.0; 4]; 4];
                for &r in &active {
                    let q = qs[r];
                    for a in 0..4 {
                        let cja = cj[(r, a)] * q;
                        for b in 0..4 {
                            m[a][b] += cja * ck[(r, b)];
                        }
                    }
                }
                for a in 0..4 {
                    for b in 0..4 {
                        let v = 2.0 * m[a][b];
                        h0[(4 * j + a, 4 * k + b)] += v;
                        if j != k {
                            h0[(4 * k + b, 4 * j + a)] += v;
                        }
                    }
                }
            }
        }
    }
    (h0, g0)
}

fn initial_guess(
    initial: &QuadState,
    reference: &MpcReference,
    config: &MpcConfig,
    warm_start: Option<&MpcSolution>,
) -> (Vec<QuadState>, Vec<QuadCommand>) {
    let h_max = config.horizon_steps;
    if let Some(ws) = warm_start {
        if ws.states.len() == h_max + 1 && ws.commands.len() == h_max {
            let mut states: Vec<QuadState> =
                (0..=h_max).map(|h| ws.states[(h + 1).min(h_max)]).collect();
            states[0] = *initial;
            let commands = (0..h_max)
                .map(|h| config.clamp_command(&ws.commands[(h + 1).min(h_max - 1)]))
                .collect();
            return (states, commands);
        }
        log::warn!("warm start dimensions do not match the horizon; cold-starting instead");
    }
    let x0 = initial.to_vector();
    let xg = reference.goal_state.to_vector();
    let states = (0..=h_max)
        .map(|h| {
            let t = h as f64 / h_max as f64;
            QuadState::from_vector(&(x0 * (1.0 - t) + xg * t)).normalized()
        })
        .collect();
    let commands = vec![config.clamp_command(&QuadCommand::hover()); h_max];
    (states, commands)
}

fn compute_defects(states: &[QuadState], commands: &[QuadCommand], dt: f64) -> Vec<SVector<f64, 10>> {
    (0..commands.len())
        .map(|h| {
            integrate_quad_euler(&states[h], &commands[h], dt).to_vector()
                - states[h + 1].to_vector()
        })
        .collect()
}

fn max_defect(ds: &[SVector<f64, 10>]) -> f64 {
    ds.iter().map(|d| d.amax()).fold(0.0, f64::max)
}

fn defect_l1(ds: &[SVector<f64, 10>]) -> f64 {
    ds.iter().map(|d| d.iter().map(|v| v.abs()).sum::<f64>()).sum()
}

fn merit_value(
    states: &[QuadState],
    commands: &[QuadCommand],
    ds: &[SVector<f64, 10>],
    reference: &MpcReference,
    t_tra: f64,
    config: &MpcConfig,
) -> f64 {
    total_cost(states, commands, reference, t_tra, config) + MERIT_DEFECT_WEIGHT * defect_l1(ds)
}

/// Clamp into the box, landing exactly on a bound when within round-off
/// of it; the QP activates bounds exactly and the absolute command must
/// inherit that.
fn snap_to_bounds(command: &QuadCommand, config: &MpcConfig) -> QuadCommand {
    let snap = |v: f64, lo: f64, hi: f64| {
        if (v - lo).abs() < 1e-9 {
            lo
        } else if (v - hi).abs() < 1e-9 {
            hi
        } else {
            v.clamp(lo, hi)
        }
    };
    QuadCommand {
        thrust: snap(command.thrust, config.c_min, config.c_max),
        body_rates: Vector3::new(
            snap(command.body_rates.x, -config.omega_max.x, config.omega_max.x),
            snap(command.body_rates.y, -config.omega_max.y, config.omega_max.y),
            snap(command.body_rates.z, -config.omega_max.z, config.omega_max.z),
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{PendulumParams, PendulumState};
    use crate::seeding::seeded_rng;
    use approx::assert_relative_eq;
    use rand::Rng;
    use std::f64::consts::FRAC_PI_2;

    fn swinging_gate_scenario() -> (QuadState, MpcReference, MpcConfig) {
        let config = MpcConfig::default();
        let initial = QuadState::hover_at(Vector3::new(-1.0, 0.0, 2.0));
        let reference = MpcReference::from_pendulum(
            QuadState::hover_at(Vector3::new(4.0, 0.0, 2.0)),
            &PendulumState::new(FRAC_PI_2, 0.0),
            &PendulumParams::default(),
            &config,
        );
        (initial, reference, config)
    }

    /// Linearized state increments of a QP direction: the linearized
    /// dynamics propagated with every defect closed.
    fn direction_states(
        a_mats: &[StateJacobian],
        b_mats: &[CommandJacobian],
        ds: &[SVector<f64, 10>],
        du: &DVector<f64>,
    ) -> Vec<SVector<f64, 10>> {
        let h_max = a_mats.len();
        let mut dx = vec![SVector::<f64, 10>::zeros(); h_max + 1];
        for h in 0..h_max {
            dx[h + 1] = a_mats[h] * dx[h] + b_mats[h] * command_block(du, h) + ds[h];
        }
        dx
    }

    fn assert_solution_feasible(solution: &MpcSolution, initial: &QuadState, config: &MpcConfig) {
        assert_eq!(solution.states[0], *initial);
        for c in &solution.commands {
            assert!(c.thrust >= config.c_min - 1e-8 && c.thrust <= config.c_max + 1e-8);
            for i in 0..3 {
                assert!(c.body_rates[i].abs() <= config.omega_max[i] + 1e-8);
            }
        }
        for h in 0..config.horizon_steps {
            let predicted = integrate_quad_euler(&solution.states[h], &solution.commands[h], config.dt);
            let defect = (predicted.to_vector() - solution.states[h + 1].to_vector()).amax();
            assert!(defect <= 1e-6, "defect {defect} at stage {h}");
        }
    }

    /// Oracle: evaluate the linearized-trajectory cost directly at random
    /// command increments; the condensed model must reproduce the change
    /// exactly (both are the same quadratic).
    #[test]
    fn condensed_model_matches_direct_linearized_cost() {
        let config = MpcConfig { horizon_steps: 4, ..MpcConfig::default() };
        let reference = MpcReference::from_pendulum(
            QuadState::hover_at(Vector3::new(1.0, 0.5, 2.0)),
            &PendulumState::new(0.9, -0.3),
            &PendulumParams::default(),
            &config,
        );
        let mut rng = seeded_rng(23);
        let h_max = config.horizon_steps;

        // A mildly perturbed rollout so defects are nonzero.
        let mut states = vec![QuadState::hover_at(Vector3::new(-0.5, 0.2, 1.9))];
        let commands: Vec<QuadCommand> = (0..h_max)
            .map(|_| {
                QuadCommand::new(
                    rng.random_range(8.0..12.0),
                    Vector3::new(
                        rng.random_range(-0.5..0.5),
                        rng.random_range(-0.5..0.5),
                        rng.random_range(-0.5..0.5),
                    ),
                )
            })
            .collect();
        for h in 0..h_max {
            let mut next = integrate_quad_euler(&states[h], &commands[h], config.dt).to_vector();
            for i in 0..10 {
                next[i] += rng.random_range(-0.05..0.05);
            }
            states.push(QuadState::from_vector(&next));
        }

        let t_tra = 0.1;
        let ds = compute_defects(&states, &commands, config.dt);
        let mut a_mats = Vec::new();
        let mut b_mats = Vec::new();
        for h in 0..h_max {
            let (a, b) = linearize_step(&states[h], &commands[h], config.dt);
            a_mats.push(a);
            b_mats.push(b);
        }
        let mut w = vec![SVector::<f64, 10>::zeros(); h_max + 1];
        for h in 0..h_max {
            w[h + 1] = a_mats[h] * w[h] + ds[h];
        }
        let refs: Vec<SVector<f64, 10>> =
            (0..h_max).map(|h| reference.gate_trajectory[h].to_vector()).collect();
        let goal = reference.goal_state.to_vector();

        let (h0, g0) = condensed_model(
            &states, &commands, &a_mats, &b_mats, &w, &refs, &goal, t_tra, &config,
        );

        let linearized_cost = |du: &DVector<f64>| {
            let dx = direction_states(&a_mats, &b_mats, &ds, du);
            let new_states: Vec<QuadState> = (0..=h_max)
                .map(|s| QuadState::from_vector(&(states[s].to_vector() + dx[s])))
                .collect();
            let new_commands: Vec<QuadCommand> = (0..h_max)
                .map(|h| QuadCommand::from_vector(&(commands[h].to_vector() + command_block(du, h))))
                .collect();
            total_cost(&new_states, &new_commands, &reference, t_tra, &config)
        };

        let base = linearized_cost(&DVector::zeros(4 * h_max));
        for _ in 0..8 {
            let du = DVector::from_fn(4 * h_max, |_, _| rng.random_range(-0.5..0.5));
            let actual = linearized_cost(&du) - base;
            let predicted = g0.dot(&du) + 0.5 * (du.transpose() * &h0 * &du)[(0, 0)];
            assert_relative_eq!(actual, predicted, epsilon = 1e-8, max_relative = 1e-8);
        }
    }

    #[test]
    fn hover_start_at_goal_stays_put() {
        let config = MpcConfig {
            q_track_max: SVector::<f64, 10>::zeros(),
            ..MpcConfig::default()
        };
        let goal = QuadState::hover_at(Vector3::new(4.0, 0.0, 2.0));
        let reference = MpcReference::from_pendulum(
            goal,
            &PendulumState::new(0.0, 0.0),
            &PendulumParams::default(),
            &config,
        );
        let solver = MpcSolver::new(config.clone()).unwrap();
        let solution = solver
            .solve(&goal, &DecisionVariables::new(1.0), &reference, None)
            .unwrap();

        assert!(solution.converged);
        for c in &solution.commands {
            assert_relative_eq!(c.thrust, crate::GRAVITY, epsilon = 1e-3);
            assert!(c.body_rates.amax() < 1e-3);
        }
        assert!(solution.cost < 1e-4, "cost {}", solution.cost);
    }

    #[test]
    fn planned_trajectory_passes_near_the_gate() {
        let (initial, reference, config) = swinging_gate_scenario();
        let solver = MpcSolver::new(config.clone()).unwrap();
        let t_tra = 1.25;
        let solution = solver
            .solve(&initial, &DecisionVariables::new(t_tra), &reference, None)
            .unwrap();

        assert!(solution.converged, "iterations: {}", solution.iterations);
        assert_solution_feasible(&solution, &initial, &config);

        let j = (t_tra / config.dt) as usize;
        let quad = &solution.states[j].position;
        let gate = &reference.gate_trajectory[j].position;
        let err = ((quad.y - gate.y).powi(2) + (quad.z - gate.z).powi(2)).sqrt();
        assert!(err <= 0.3, "y-z traversal error {err}");

        // The horizon ends 0.75 s after the gate, too soon to come to rest
        // on the goal, but the trajectory should be well on its way there.
        let terminal = (solution.states[50].position - Vector3::new(4.0, 0.0, 2.0)).norm();
        assert!(terminal < 1.5, "terminal distance {terminal}");
        assert!(solution.states[50].position.x > 2.5, "stalled before the gate");
    }

    #[test]
    fn merit_history_is_monotone_nonincreasing() {
        let (initial, reference, config) = swinging_gate_scenario();
        let solver = MpcSolver::new(config).unwrap();
        let solution = solver
            .solve(&initial, &DecisionVariables::new(1.25), &reference, None)
            .unwrap();
        for pair in solution.cost_history.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-12, "history not monotone: {:?}", pair);
        }
    }

    #[test]
    fn identical_solves_are_bit_identical() {
        let (initial, reference, config) = swinging_gate_scenario();
        let solver = MpcSolver::new(config).unwrap();
        let z = DecisionVariables::new(1.25);
        let a = solver.solve(&initial, &z, &reference, None).unwrap();
        let b = solver.solve(&initial, &z, &reference, None).unwrap();
        for (sa, sb) in a.states.iter().zip(&b.states) {
            for (va, vb) in sa.to_vector().iter().zip(sb.to_vector().iter()) {
                assert_eq!(va.to_bits(), vb.to_bits());
            }
        }
        for (ca, cb) in a.commands.iter().zip(&b.commands) {
            for (va, vb) in ca.to_vector().iter().zip(cb.to_vector().iter()) {
                assert_eq!(va.to_bits(), vb.to_bits());
            }
        }
        assert_eq!(a.cost.to_bits(), b.cost.to_bits());
    }

    #[test]
    fn warm_start_converges_in_fewer_iterations() {
        let (initial, reference, config) = swinging_gate_scenario();
        let solver = MpcSolver::new(config.clone()).unwrap();
        let z = DecisionVariables::new(1.25);
        let cold = solver.solve(&initial, &z, &reference, None).unwrap();

        // Advance one control step and re-solve warm, as the closed loop does.
        let next = integrate_quad_euler(&initial, &cold.first_command(&config), config.dt);
        let warm = solver.solve(&next, &z, &reference, Some(&cold)).unwrap();
        assert!(warm.converged);
        assert!(
            warm.iterations <= cold.iterations,
            "warm {} vs cold {}",
            warm.iterations,
            cold.iterations
        );
    }

    #[test]
    fn reusing_a_solution_for_a_nearby_traversal_time_is_cheaper() {
        let (initial, reference, config) = swinging_gate_scenario();
        let solver = MpcSolver::new(config.clone()).unwrap();
        let base = solver
            .solve(&initial, &DecisionVariables::new(1.25), &reference, None)
            .unwrap();

        let z = DecisionVariables::new(1.32);
        let cold = solver.solve(&initial, &z, &reference, None).unwrap();
        let reused = solver.solve_with_guess(&initial, &z, &reference, &base).unwrap();

        assert!(reused.converged);
        assert_solution_feasible(&reused, &initial, &config);
        assert!(
            reused.iterations < cold.iterations,
            "reused {} vs cold {}",
            reused.iterations,
            cold.iterations
        );
        // Both routes must land on trajectories of comparable quality.
        assert!(reused.cost <= cold.cost * 1.05 + 1e-6);
    }

    #[test]
    fn constant_tracking_mode_also_converges() {
        let (initial, mut reference, mut config) = swinging_gate_scenario();
        config.tracking_mode = super::super::TrackingMode::Constant;
        reference.goal_state = QuadState::hover_at(Vector3::new(4.0, 0.0, 2.0));
        let solver = MpcSolver::new(config.clone()).unwrap();
        let solution = solver
            .solve(&initial, &DecisionVariables::new(1.25), &reference, None)
            .unwrap();
        assert!(solution.converged);
        assert_solution_feasible(&solution, &initial, &config);
    }

    #[test]
    fn saturated_climb_returns_exact_thrust_bound() {
        let config = MpcConfig {
            q_track_max: SVector::<f64, 10>::zeros(),
            ..MpcConfig::default()
        };
        let initial = QuadState::hover_at(Vector3::new(0.0, 0.0, 0.0));
        let reference = MpcReference::from_pendulum(
            QuadState::hover_at(Vector3::new(0.0, 0.0, 30.0)),
            &PendulumState::new(0.0, 0.0),
            &PendulumParams::default(),
            &config,
        );
        let solver = MpcSolver::new(config.clone()).unwrap();
        let solution = solver
            .solve(&initial, &DecisionVariables::new(1.0), &reference, None)
            .unwrap();
        let first = solution.first_command(&config);
        assert_eq!(first.thrust, config.c_max);
    }

    #[test]
    fn out_of_range_traversal_time_is_clamped_not_rejected() {
        let (initial, reference, config) = swinging_gate_scenario();
        let solver = MpcSolver::new(config).unwrap();
        let solution = solver
            .solve(&initial, &DecisionVariables::new(100.0), &reference, None)
            .unwrap();
        assert!(solution.states.len() == 51);
    }

    #[test]
    fn iteration_cap_returns_best_iterate_unconverged() {
        let (initial, reference, mut config) = swinging_gate_scenario();
        config.sqp_max_iters = 1;
        let solver = MpcSolver::new(config.clone()).unwrap();
        let solution = solver
            .solve(&initial, &DecisionVariables::new(1.25), &reference, None)
            .unwrap();
        assert!(!solution.converged);
        assert_eq!(solution.iterations, 1);
        // Even the capped result is feasible: bounds hold and states are
        // re-rolled from the commands.
        assert_solution_feasible(&solution, &initial, &config);
    }

    #[test]
    fn mismatched_reference_is_rejected() {
        let (initial, reference, config) = swinging_gate_scenario();
        let mut short = reference.clone();
        short.gate_trajectory.pop();
        let solver = MpcSolver::new(config).unwrap();
        let err = solver
            .solve(&initial, &DecisionVariables::new(1.0), &short, None)
            .unwrap_err();
        assert!(matches!(err, MpcError::ReferenceLength { .. }));
    }
}
