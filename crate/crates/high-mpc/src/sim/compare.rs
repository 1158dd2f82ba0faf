//! Head-to-head evaluation of the learned controller against plain
//! reference tracking.
//!
//! Fairness rests on matched starts: for each seed both controllers fly
//! from the identical vehicle pose and pendulum release, so any score
//! difference comes from the controller and not the draw. Episodes run
//! in parallel; results are keyed by seed and collected in input order,
//! so the report does not depend on the worker count.

use rayon::prelude::*;
use serde::Serialize;

use super::{
    run_episode, traversal_metrics, Controller, EpisodeConfig, SimError, TraversalMetrics,
};
use crate::deep_policy::{random_initial_conditions, Mlp};
use crate::seeding::seeded_rng;

/// One matched pair of flights from the same initial conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComparisonEpisode {
    pub seed: u64,
    pub high: TraversalMetrics,
    pub standard: TraversalMetrics,
}

/// Aggregates over one controller's column of the comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ControllerSummary {
    /// Fraction of episodes that crossed within the success threshold.
    pub success_rate: f64,
    /// Mean crossing error over the episodes that did cross; absent when
    /// none crossed.
    pub mean_crossing_error: Option<f64>,
    pub mean_y_rms: f64,
    pub mean_solve_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub episodes: Vec<ComparisonEpisode>,
    /// `None` when the report covers zero episodes.
    pub high: Option<ControllerSummary>,
    pub standard: Option<ControllerSummary>,
}

impl ComparisonReport {
    /// One row per episode; empty fields where an episode never crossed.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "seed,high_crossing_time,high_crossing_error,high_success,high_y_rms,\
             standard_crossing_time,standard_crossing_error,standard_success,standard_y_rms\n",
        );
        let opt = |v: Option<f64>| v.map(|v| format!("{v:.16e}")).unwrap_or_default();
        for ep in &self.episodes {
            out.push_str(&format!(
                "{},{},{},{},{:.16e},{},{},{},{:.16e}\n",
                ep.seed,
                opt(ep.high.crossing_time),
                opt(ep.high.crossing_error),
                u8::from(ep.high.success),
                ep.high.y_rms,
                opt(ep.standard.crossing_time),
                opt(ep.standard.crossing_error),
                u8::from(ep.standard.success),
                ep.standard.y_rms,
            ));
        }
        out
    }
}

fn summarize(metrics: &[TraversalMetrics]) -> Option<ControllerSummary> {
    if metrics.is_empty() {
        return None;
    }
    let n = metrics.len() as f64;
    let successes = metrics.iter().filter(|m| m.success).count() as f64;
    let errors: Vec<f64> = metrics.iter().filter_map(|m| m.crossing_error).collect();
    let mean_crossing_error = if errors.is_empty() {
        None
    } else {
        Some(errors.iter().sum::<f64>() / errors.len() as f64)
    };
    Some(ControllerSummary {
        success_rate: successes / n,
        mean_crossing_error,
        mean_y_rms: metrics.iter().map(|m| m.y_rms).sum::<f64>() / n,
        mean_solve_time: metrics.iter().map(|m| m.mean_solve_time).sum::<f64>() / n,
    })
}

/// Fly every seed with both controllers and score the results.
///
/// `base` supplies everything except the initial conditions, which each
/// seed draws afresh from the collection ranges. The learned controller
/// uses `model`; the baseline flies the same solver with the tracking
/// term pinned to the current gate state.
pub fn compare_controllers(
    base: &EpisodeConfig,
    seeds: &[u64],
    model: &Mlp,
) -> Result<ComparisonReport, SimError> {
    let episodes: Vec<ComparisonEpisode> = seeds
        .par_iter()
        .map(|&seed| {
            let mut rng = seeded_rng(seed);
            let (initial_quad, initial_pendulum) = random_initial_conditions(&mut rng);
            let pair = EpisodeConfig {
                initial_quad,
                initial_pendulum,
                seed,
                ..base.clone()
            };
            let high_cfg = EpisodeConfig { controller: Controller::HighMpc, ..pair.clone() };
            let standard_cfg = EpisodeConfig { controller: Controller::StandardMpc, ..pair };
            let plane = base.pendulum.pivot.x;
            let high = traversal_metrics(&run_episode(&high_cfg, Some(model))?, plane);
            let standard = traversal_metrics(&run_episode(&standard_cfg, None)?, plane);
            Ok(ComparisonEpisode { seed, high, standard })
        })
        .collect::<Result<_, SimError>>()?;

    let high = summarize(&episodes.iter().map(|e| e.high).collect::<Vec<_>>());
    let standard = summarize(&episodes.iter().map(|e| e.standard).collect::<Vec<_>>());
    Ok(ComparisonReport { episodes, high, standard })
}
