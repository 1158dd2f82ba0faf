//! Self-supervised label generation: run the traversal-time search
//! inside randomized closed-loop episodes and record what it decided.
//!
//! Each control step does real work: search for the best traversal time
//! from the current state, log `(observation, t_tra)`, then fly one step
//! of the resulting plan through the ground-truth integrator. The labels
//! therefore come from the optimizer the network is meant to imitate,
//! evaluated exactly where the network will later be queried.
//!
//! Episodes are independent and parallelize over a thread pool; every
//! random draw derives from (base seed, episode index), so the dataset
//! is identical for any worker count.

use nalgebra::Vector3;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{observe, Dataset, DatasetRecord, DeepPolicyError};
use crate::dynamics::{
    integrate_pendulum_rk4, integrate_quad_rk4, PendulumParams, PendulumState, QuadState,
};
use crate::mpc::{DecisionVariables, MpcReference, MpcSolution, MpcSolver};
use crate::policy_search::{search, GaussianPolicy, SearchConfig};
use crate::seeding::{derive_seed, seeded_rng};

/// Spread of the per-step traversal-time search: wide on the first step
/// of an episode, narrow once warm-started from the previous step's mean.
const INNER_SIGMA_COLD: f64 = 0.5;
const INNER_SIGMA_WARM: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollectConfig {
    pub episodes: usize,
    pub seed: u64,
    pub pendulum: PendulumParams,
    /// Hover goal behind the gate; episodes fly toward it.
    pub goal_position: Vector3<f64>,
    /// Hard cap on control steps per episode.
    pub max_steps: usize,
    /// Candidate count of the per-step search (reduced from the offline
    /// search's 30: warm starts make up the difference).
    pub inner_samples: usize,
    pub inner_iters: usize,
}

impl Default for CollectConfig {
    fn default() -> Self {
        Self {
            episodes: 100,
            seed: 0,
            pendulum: PendulumParams::default(),
            goal_position: Vector3::new(4.0, 0.0, 2.0),
            max_steps: 250,
            inner_samples: 20,
            inner_iters: 10,
        }
    }
}

impl CollectConfig {
    pub fn validate(&self) -> Result<(), DeepPolicyError> {
        self.pendulum
            .validate()
            .map_err(|e| DeepPolicyError::InvalidConfig(e.to_string()))?;
        if self.max_steps == 0 || self.inner_samples < 2 || self.inner_iters == 0 {
            return Err(DeepPolicyError::InvalidConfig(
                "max_steps, inner_iters must be positive and inner_samples at least 2".into(),
            ));
        }
        if !self.goal_position.iter().all(|v| v.is_finite()) {
            return Err(DeepPolicyError::InvalidConfig("non-finite goal position".into()));
        }
        Ok(())
    }
}

/// Draw an episode start: vehicle hovering somewhere before the gate,
/// pendulum released at a random angle and rate.
pub fn random_initial_conditions(rng: &mut ChaCha8Rng) -> (QuadState, PendulumState) {
    let quad = QuadState::hover_at(Vector3::new(
        rng.random_range(-2.0..0.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(1.5..2.5),
    ));
    let pendulum = PendulumState::new(
        rng.random_range(-std::f64::consts::FRAC_PI_2..std::f64::consts::FRAC_PI_2),
        rng.random_range(-1.0..1.0),
    );
    (quad, pendulum)
}

/// Run all episodes and pool their records in episode order. Episodes
/// whose solver or search fails are logged and dropped; the dataset only
/// contains labels the optimizer actually produced.
pub fn collect(solver: &MpcSolver, config: &CollectConfig) -> Result<Dataset, DeepPolicyError> {
    config.validate()?;
    let episodes: Vec<Result<Vec<DatasetRecord>, DeepPolicyError>> = (0..config.episodes)
        .into_par_iter()
        .map(|e| collect_episode(e, solver, config))
        .collect();

    let mut dataset = Dataset::default();
    for (e, outcome) in episodes.into_iter().enumerate() {
        match outcome {
            Ok(records) => dataset.records.extend(records),
            Err(err) => log::warn!("episode {e} skipped: {err}"),
        }
    }
    Ok(dataset)
}

fn collect_episode(
    episode: usize,
    solver: &MpcSolver,
    config: &CollectConfig,
) -> Result<Vec<DatasetRecord>, DeepPolicyError> {
    let mpc = solver.config();
    let episode_seed = derive_seed(config.seed, episode as u64);
    let mut rng = seeded_rng(episode_seed);
    let (mut quad, mut pendulum) = random_initial_conditions(&mut rng);
    let goal = QuadState::hover_at(config.goal_position);
    let t_max = 2.0 * mpc.horizon_seconds();

    let mut mu = mpc.horizon_seconds() / 2.0;
    let mut warm: Option<MpcSolution> = None;
    let mut records = Vec::new();

    for step in 0..config.max_steps {
        let reference = MpcReference::from_pendulum(goal, &pendulum, &config.pendulum, mpc);

        let sigma = if step == 0 { INNER_SIGMA_COLD } else { INNER_SIGMA_WARM };
        let policy = GaussianPolicy::scalar(mu, sigma);
        let search_config = SearchConfig {
            num_samples: config.inner_samples,
            max_iters: config.inner_iters,
            seed: derive_seed(episode_seed, step as u64 + 1),
            ..SearchConfig::default()
        };
        let outcome = search(&policy, solver, &quad, &reference, &search_config)?;
        let t_star = outcome.policy.mean[0].clamp(0.0, t_max);

        records.push(DatasetRecord {
            observation: observe(&quad, &reference.gate_trajectory[0]),
            t_tra: t_star,
        });
        mu = t_star;

        let solution =
            solver.solve(&quad, &DecisionVariables::new(t_star), &reference, warm.as_ref())?;
        let command = solution.first_command(mpc);
        quad = integrate_quad_rk4(&quad, &command, mpc.dt).normalized();
        pendulum = integrate_pendulum_rk4(&pendulum, &config.pendulum, mpc.dt);
        warm = Some(solution);

        if !quad.is_finite() || quad.position.norm() > 20.0 {
            return Err(DeepPolicyError::InvalidConfig(format!(
                "episode diverged at step {step}"
            )));
        }
        if quad.position.x >= config.pendulum.pivot.x {
            break;
        }
    }
    Ok(records)
}
