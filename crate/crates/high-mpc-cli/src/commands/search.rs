//! `search`: optimize the traversal time for the fixed scenario.

use serde::Serialize;
use serde_json::json;

use high_mpc::dynamics::QuadState;
use high_mpc::mpc::{DecisionVariables, MpcReference};
use high_mpc::policy_search::{history_csv, search, GaussianPolicy};

use super::{plan_csv, Context};
use crate::CliError;

/// Stable on-disk form of a Gaussian policy. JSON numbers round-trip
/// `f64` exactly, so reading this back loses nothing.
#[derive(Serialize)]
struct SavedPolicy {
    mean: Vec<f64>,
    covariance: Vec<Vec<f64>>,
}

impl From<&GaussianPolicy> for SavedPolicy {
    fn from(policy: &GaussianPolicy) -> Self {
        let d = policy.dim();
        SavedPolicy {
            mean: policy.mean.iter().copied().collect(),
            covariance: (0..d)
                .map(|i| (0..d).map(|j| policy.covariance[(i, j)]).collect())
                .collect(),
        }
    }
}

pub fn run(ctx: &Context, iters_override: Option<usize>) -> Result<(), CliError> {
    let config = &ctx.config;
    let mut section = config.search.clone();
    if let Some(iters) = iters_override {
        section.max_iters = iters;
    }
    let search_config = section.to_config(config.seed);
    search_config
        .validate()
        .map_err(|e| CliError::validation(format!("search: {e}")))?;

    let solver = ctx.solver()?;
    let episode = config.episode_config();
    let reference = MpcReference::from_pendulum(
        QuadState::hover_at(episode.goal_position),
        &episode.initial_pendulum,
        &episode.pendulum,
        &config.mpc,
    );

    let outcome = search(
        &section.initial_policy(),
        &solver,
        &episode.initial_quad,
        &reference,
        &search_config,
    )
    .map_err(|e| CliError::runtime(format!("search failed: {e}")))?;

    let mu = outcome.policy.mean[0];
    let sigma = outcome.policy.covariance[(0, 0)].sqrt();

    ctx.write_text("search_history.csv", &history_csv(&outcome.history))?;
    let policy_json = serde_json::to_string_pretty(&SavedPolicy::from(&outcome.policy))
        .map_err(|e| CliError::runtime(format!("cannot encode policy: {e}")))?;
    ctx.write_text("policy.json", &(policy_json + "\n"))?;

    // The plan the final mean produces, for plotting and the planned-
    // traversal acceptance check.
    let dv = DecisionVariables::new(mu).clamped(&config.mpc);
    let plan = solver
        .solve(&episode.initial_quad, &dv, &reference, None)
        .map_err(|e| CliError::runtime(format!("final plan solve failed: {e}")))?;
    ctx.write_text("planned_trajectory.csv", &plan_csv(&plan, config.mpc.dt))?;

    ctx.write_manifest(
        "search",
        json!({
            "iterations": outcome.history.len(),
            "final_mean": mu,
            "final_std": sigma,
            "artifacts": {
                "history": "search_history.csv",
                "policy": "policy.json",
                "planned_trajectory": "planned_trajectory.csv",
            },
        }),
    )?;

    println!(
        "search: mu = {mu:.6} s, sigma = {sigma:.3e} after {} iterations",
        outcome.history.len()
    );
    Ok(())
}
