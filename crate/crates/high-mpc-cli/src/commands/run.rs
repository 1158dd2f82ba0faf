//! `run`: fly closed-loop episodes with the configured controller.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use high_mpc::deep_policy::{load_model, random_initial_conditions, Mlp};
use high_mpc::seeding::{derive_seed, seeded_rng};
use high_mpc::sim::{
    run_episode, traversal_metrics, Controller, EpisodeConfig, TerminalStatus, TraversalMetrics,
};

use super::Context;
use crate::CliError;

#[derive(Serialize)]
struct EpisodeReport {
    episode: usize,
    seed: u64,
    status: TerminalStatus,
    metrics: TraversalMetrics,
}

pub fn run(ctx: &Context, model_path: Option<&Path>) -> Result<(), CliError> {
    let config = &ctx.config;
    let controller = config.controller();
    let model: Option<Mlp> = match (controller, model_path) {
        (Controller::HighMpc, None) => {
            return Err(CliError::validation(
                "the high_mpc controller needs --model <FILE> (train one with `train`)",
            ));
        }
        (Controller::HighMpc, Some(path)) => Some(
            load_model(path)
                .map_err(|e| CliError::validation(format!("model {}: {e}", path.display())))?,
        ),
        (_, Some(path)) => {
            return Err(CliError::validation(format!(
                "controller {:?} does not use a model, but --model {} was given",
                config.sim.controller,
                path.display()
            )));
        }
        (_, None) => None,
    };

    let base = config.episode_config();
    // One fixed-scenario flight, or `sim.episodes` randomized ones.
    let episodes: Vec<EpisodeConfig> = if config.sim.randomize {
        (0..config.sim.episodes)
            .map(|i| {
                let seed = derive_seed(config.seed, i as u64);
                let mut rng = seeded_rng(seed);
                let (initial_quad, initial_pendulum) = random_initial_conditions(&mut rng);
                EpisodeConfig { initial_quad, initial_pendulum, seed, ..base.clone() }
            })
            .collect()
    } else {
        vec![base]
    };

    let plane = config.pendulum.pivot.x;
    let logs: Vec<_> = episodes
        .par_iter()
        .map(|episode| run_episode(episode, model.as_ref()))
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::runtime(format!("episode failed: {e}")))?;

    let mut reports = Vec::with_capacity(logs.len());
    for (i, (episode, log)) in episodes.iter().zip(&logs).enumerate() {
        ctx.write_text(&format!("episode_{i:03}.csv"), &log.to_csv())?;
        reports.push(EpisodeReport {
            episode: i,
            seed: episode.seed,
            status: log.status,
            metrics: traversal_metrics(log, plane),
        });
    }
    let metrics_json = serde_json::to_string_pretty(&reports)
        .map_err(|e| CliError::runtime(format!("cannot encode metrics: {e}")))?;
    ctx.write_text("metrics.json", &(metrics_json + "\n"))?;

    let successes = reports.iter().filter(|r| r.metrics.success).count();
    ctx.write_manifest(
        "run",
        json!({
            "controller": config.sim.controller,
            "episodes": reports.len(),
            "successes": successes,
            "artifacts": { "metrics": "metrics.json", "episode_logs": "episode_NNN.csv" },
        }),
    )?;

    println!("run: {successes}/{} episodes within the success threshold", reports.len());
    Ok(())
}
