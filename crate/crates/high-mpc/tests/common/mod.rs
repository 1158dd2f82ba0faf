//! Helpers shared by the integration suites. Everything here goes
//! through the crate's public API only.
#![allow(dead_code)]

use std::path::Path;

use nalgebra::{DVector, Vector3};

use high_mpc::deep_policy::{load_model, save_model, train, Dataset, Mlp, Observation, TrainConfig};
use high_mpc::dynamics::{GateState, PendulumParams, PendulumState, QuadCommand, QuadState};
use high_mpc::mpc::{
    total_cost, DecisionVariables, MpcConfig, MpcReference, MpcSolrandomution, MpcSolver,
};
use high_mpc::policy_search::{update_policy, GaussianPolicy};

/// The flight task every suite talks about: hover short of the gate,
/// pendulum released horizontally, goal hover behind it.
pub fn scenario_initial() -> QuadState {
    QuadState::hover_at(Vector3::new(-1.0, 0.0, 2.0))
}

pub fn scenario_reference(theta0: f64, config: &MpcConfig) -> MpcReference {
    MpcReference::from_pendulum(
        QuadState::hover_at(Vector3::new(4.0, 0.0, 2.0)),
        &PendulumState::new(theta0, 0.0),
        &PendulumParams::default(),
        config,
    )
}

/// First gate-plane crossing of an open-loop plan: linear interpolation
/// between the bracketing stages, y–z distance to the interpolated gate.
pub fn plan_crossing_error(
    states: &[QuadState],
    gates: &[GateState],
    plane_x: f64,
) -> Option<f64> {
    for k in 0..states.len().saturating_sub(1) {
        let (x0, x1) = (states[k].position.x, states[k + 1].position.x);
        let alpha = if x0 >= plane_x {
            0.0
        } else if x1 >= plane_x {
            (plane_x - x0) / (x1 - x0)
        } else {
            continue;
        };
        let quad = states[k].position.lerp(&states[k + 1].position, alpha);
        let gate = gates[k].position.lerp(&gates[k + 1].position, alpha);
        let dy = quad.y - gate.y;
        let dz = quad.z - gate.z;
        return Some((dy * dy + dz * dz).sqrt());
    }
    None
}

// ---------------------------------------------------------------------------
// Oracle: the weighted maximum-likelihood refit against a dense scan.
// ---------------------------------------------------------------------------

/// Maximize the weighted log-likelihood Σ dᵢ log N(sᵢ | μ, σ²) over a
/// dense (μ, σ²) scan with two refinement passes. Independent of the
/// closed form under test.
pub fn scan_weighted_ml(samples: &[f64], weights: &[f64]) -> (f64, f64) {
    let objective = |mu: f64, var: f64| -> f64 {
        samples
            .iter()
            .zip(weights)
            .map(|(s, d)| d * (-0.5 * (var.ln() + (s - mu).powi(2) / var)))
            .sum()
    };
    let (lo, hi) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    let spread = (hi - lo).max(1e-3);
    let (mut mu_lo, mut mu_hi) = (lo - spread, hi + spread);
    let (mut var_lo, mut var_hi) = (1e-8, (2.0 * spread).powi(2));
    let mut best = (0.5 * (mu_lo + mu_hi), 0.5 * (var_lo + var_hi));
    for _ in 0..3 {
        let mut best_value = f64::NEG_INFINITY;
        for i in 0..=400 {
            let mu = mu_lo + (mu_hi - mu_lo) * i as f64 / 400.0;
            for j in 0..=400 {
                let var = var_lo + (var_hi - var_lo) * j as f64 / 400.0;
                let value = objective(mu, var);
                if value > best_value {
                    best_value = value;
                    best = (mu, var);
                }
            }
        }
        // Zoom into the winning cell for the next pass.
        let mu_step = (mu_hi - mu_lo) / 400.0;
        let var_step = (var_hi - var_lo) / 400.0;
        (mu_lo, mu_hi) = (best.0 - 2.0 * mu_step, best.0 + 2.0 * mu_step);
        (var_lo, var_hi) = ((best.1 - 2.0 * var_step).max(1e-10), best.1 + 2.0 * var_step);
    }
    best
}

/// Run the closed-form update and the scan on the same toy; return the
/// worst absolute deviation between the two (mean and variance).
pub fn weighted_ml_deviation(samples: &[f64], weights: &[f64]) -> f64 {
    let policy = GaussianPolicy::scalar(0.0, 10.0);
    let draws: Vec<DVector<f64>> =
        samples.iter().map(|&s| DVector::from_element(1, s)).collect();
    let update = update_policy(&policy, &draws, weights).expect("toy update succeeds");
    let (mu_scan, var_scan) = scan_weighted_ml(samples, weights);
    let d_mu = (update.policy.mean[0] - mu_scan).abs();
    let d_var = (update.policy.covariance[(0, 0)] - var_scan).abs();
    d_mu.max(d_var)
}

// ---------------------------------------------------------------------------
// Oracle: the two-stage solver against brute-force grid search.
// ---------------------------------------------------------------------------

pub struct GridComparison {
    pub solver_cost: f64,
    pub grid_cost: f64,
    pub solver_commands: Vec<QuadCommand>,
    pub grid_commands: Vec<QuadCommand>,
    pub thrust_spacing: f64,
    pub rate_spacing: f64,
}

/// Solve a two-stage problem and exhaustively grid the same command
/// space. Both sides roll states through the same one-step model and
/// score with the same public cost, so the only thing compared is the
/// minimization itself.
pub fn two_stage_grid_comparison(points_per_axis: usize) -> GridComparison {
    // Tight bounds keep the grid fine enough to be meaningful.
    let config = MpcConfig {
        horizon_steps: 2,
        c_min: 8.0,
        c_max: 12.0,
        omega_max: Vector3::new(0.5, 0.5, 0.5),
        ..MpcConfig::default()
    };
    let initial = QuadState::hover_at(Vector3::new(0.0, 0.0, 2.0));
    let goal = QuadState::hover_at(Vector3::new(0.03, 0.02, 2.01));
    // A gate sitting right on the path keeps the optimum off the bounds.
    let gate = GateState {
        position: Vector3::new(0.02, 0.01, 2.0),
        velocity: Vector3::zeros(),
        attitude: nalgebra::Quaternion::identity(),
    };
    let reference = MpcReference::new(goal, vec![gate; config.horizon_steps + 1]);
    let dv = DecisionVariables::new(config.dt);

    let solver = MpcSolver::new(config.clone()).expect("config is valid");
    let solution = solver.solve(&initial, &dv, &reference, None).expect("two-stage solve");

    let n = points_per_axis;
    let axis = |lo: f64, hi: f64, i: usize| lo + (hi - lo) * i as f64 / (n - 1) as f64;
    let command = |idx: [usize; 4]| QuadCommand {
        thrust: axis(config.c_min, config.c_max, idx[0]),
        body_rates: Vector3::new(
            axis(-config.omega_max.x, config.omega_max.x, idx[1]),
            axis(-config.omega_max.y, config.omega_max.y, idx[2]),
            axis(-config.omega_max.z, config.omega_max.z, idx[3]),
        ),
    };

    let mut grid_cost = f64::INFINITY;
    let mut grid_commands = vec![QuadCommand::hover(); 2];
    let combos = n * n * n * n;
    for a in 0..combos {
        let c0 = command([a / (n * n * n), (a / (n * n)) % n, (a / n) % n, a % n]);
        let s1 = high_mpc::dynamics::integrate_quad_euler(&initial, &c0, config.dt);
        for b in 0..combos {
            let c1 = command([b / (n * n * n), (b / (n * n)) % n, (b / n) % n, b % n]);
            let s2 = high_mpc::dynamics::integrate_quad_euler(&s1, &c1, config.dt);
            let cost = total_cost(
                &[initial, s1, s2],
                &[c0, c1],
                &reference,
                dv.t_tra,
                &config,
            );
            if cost < grid_cost {
                grid_cost = cost;
                grid_commands = vec![c0, c1];
            }
        }
    }

    GridComparison {
        solver_cost: solution.cost,
        grid_cost,
        solver_commands: solution.commands,
        grid_commands,
        thrust_spacing: (config.c_max - config.c_min) / (n - 1) as f64,
        rate_spacing: 2.0 * config.omega_max.x / (n - 1) as f64,
    }
}

impl GridComparison {
    /// Largest per-axis gap between the solver's commands and the best
    /// grid point, in units of the respective grid spacing.
    pub fn worst_gap_in_spacings(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (s, g) in self.solver_commands.iter().zip(&self.grid_commands) {
            worst = worst.max((s.thrust - g.thrust).abs() / self.thrust_spacing);
            for axis in 0..3 {
                worst = worst
                    .max((s.body_rates[axis] - g.body_rates[axis]).abs() / self.rate_spacing);
            }
        }
        worst
    }
}

// ---------------------------------------------------------------------------
// Oracle: the gradient the trainer applies against finite differences.
// ---------------------------------------------------------------------------

/// A dataset whose feature mean is exactly 0 and population std exactly
/// 1 per dimension, so training leaves the standardization at identity
/// and saved parameter files stay directly comparable.
pub fn standardized_pair_dataset() -> Dataset {
    let mut dataset = Dataset::default();
    let mut o = Observation::zeros();
    for d in 0..o.len() {
        o[d] = if d % 2 == 0 { 1.0 } else { -1.0 };
    }
    dataset.push(o, 0.8);
    dataset.push(-o, 1.3);
    dataset
}

/// The float-only lines of a saved model file hold the parameters in a
/// fixed order; labeled lines (header, sizes, standardization, shapes)
/// interleave them. Flatten the parameters out of the text.
pub fn model_parameters(text: &str) -> Vec<f64> {
    text.lines()
        .filter(|line| !line.starts_with(|c: char| c.is_ascii_alphabetic()))
        .flat_map(|line| line.split_whitespace().map(|v| v.parse::<f64>().unwrap()))
        .collect()
}

/// Rewrite parameter `index` (in [`model_parameters`] order) to `value`.
pub fn patch_model_parameter(text: &str, index: usize, value: f64) -> String {
    let mut seen = 0usize;
    let mut out = String::new();
    for line in text.lines() {
        if line.starts_with(|c: char| c.is_ascii_alphabetic()) {
            out.push_str(line);
        } else {
            let mut first = true;
            for field in line.split_whitespace() {
                if !first {
                    out.push(' ');
                }
                first = false;
                if seen == index {
                    out.push_str(&format!("{value:.16e}"));
                } else {
                    out.push_str(field);
                }
                seen += 1;
            }
        }
        out.push('\n');
    }
    out
}

/// Mean squared error of a model over a dataset, via public `forward`.
pub fn dataset_mse(model: &Mlp, dataset: &Dataset) -> f64 {
    let total: f64 = dataset
        .records
        .iter()
        .map(|r| (model.forward(&r.observation) - r.t_tra).powi(2))
        .sum();
    total / dataset.len() as f64
}

/// Compare the gradient one full-batch training step applies against
/// central finite differences of the loss, for `probes` parameters
/// spread across the network. Returns the worst relative deviation.
///
/// The first momentum step is exactly `-lr * gradient`, so the applied
/// gradient falls out of the before/after parameter files; perturbed
/// copies for the differences are made by patching those files.
pub fn training_gradient_vs_fd(dir: &Path, seed: u64, probes: usize) -> f64 {
    let dataset = standardized_pair_dataset();
    let learning_rate = 1e-3;
    let train_config = TrainConfig {
        learning_rate,
        batch_size: dataset.len(),
        epochs: 1,
        validation_fraction: 0.0,
        seed,
    };

    let before = Mlp::new(seed);
    let before_path = dir.join("before.txt");
    save_model(&before, &before_path).unwrap();
    let before_text = std::fs::read_to_string(&before_path).unwrap();

    let (after, _) = train(&before, &dataset, &train_config).unwrap();
    let after_path = dir.join("after.txt");
    save_model(&after, &after_path).unwrap();
    let after_text = std::fs::read_to_string(&after_path).unwrap();

    let p_before = model_parameters(&before_text);
    let p_after = model_parameters(&after_text);
    assert_eq!(p_before.len(), p_after.len());
    // Standardization stayed at identity, so every float is a parameter
    // of the same network before and after.
    let n_params = p_before.len();

    let h = 1e-5;
    let probe_path = dir.join("probe.txt");
    let mut worst: f64 = 0.0;
    for p in 0..probes {
        let index = p * n_params / probes;
        let applied = (p_before[index] - p_after[index]) / learning_rate;

        let mut losses = [0.0; 2];
        for (slot, delta) in [(0usize, h), (1usize, -h)] {
            let patched = patch_model_parameter(&before_text, index, p_before[index] + delta);
            std::fs::write(&probe_path, patched).unwrap();
            let model = load_model(&probe_path).unwrap();
            losses[slot] = dataset_mse(&model, &dataset);
        }
        let fd = (losses[0] - losses[1]) / (2.0 * h);

        let denom = applied.abs().max(fd.abs()).max(1e-6);
        worst = worst.max((applied - fd).abs() / denom);
    }
    worst
}

// ---------------------------------------------------------------------------
// Oracle: coarse RK4 against fine Euler over a whole maneuver.
// ---------------------------------------------------------------------------

/// Integrate an aggressive command sequence with RK4 at `dt` and with
/// Euler at `dt/100`; return the worst state-vector deviation across the
/// trajectory.
pub fn rk4_vs_fine_euler_deviation(steps: usize, dt: f64) -> f64 {
    let commands: Vec<QuadCommand> = (0..steps)
        .map(|k| {
            let t = k as f64 * dt;
            QuadCommand {
                thrust: 9.81 + 3.0 * (2.0 * t).sin(),
                body_rates: Vector3::new(
                    1.5 * (3.0 * t).cos(),
                    -1.0 * (2.5 * t).sin(),
                    0.5 * (1.5 * t).cos(),
                ),
            }
        })
        .collect();

    let mut coarse = QuadState::hover_at(Vector3::new(0.0, 0.0, 2.0));
    let mut fine = coarse;
    let mut worst: f64 = 0.0;
    for command in &commands {
        coarse = high_mpc::dynamics::integrate_quad_rk4(&coarse, command, dt);
        for _ in 0..100 {
            fine = high_mpc::dynamics::integrate_quad_euler(&fine, command, dt / 100.0);
        }
        worst = worst.max((coarse.to_vector() - fine.to_vector()).amax());
    }
    worst
}
