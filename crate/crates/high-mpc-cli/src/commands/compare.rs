//! `compare`: learned controller versus plain tracking, matched starts.

use std::path::Path;

use serde_json::json;

use high_mpc::deep_policy::load_model;
use high_mpc::seeding::derive_seed;
use high_mpc::sim::compare_controllers;

use super::Context;
use crate::CliError;

pub fn run(ctx: &Context, model_path: &Path) -> Result<(), CliError> {
    let config = &ctx.config;
    let model = load_model(model_path)
        .map_err(|e| CliError::validation(format!("model {}: {e}", model_path.display())))?;

    let base = config.episode_config();
    let seeds: Vec<u64> =
        (0..config.sim.episodes).map(|i| derive_seed(config.seed, i as u64)).collect();

    let report = compare_controllers(&base, &seeds, &model)
        .map_err(|e| CliError::runtime(format!("comparison failed: {e}")))?;

    ctx.write_text("comparison.csv", &report.to_csv())?;
    let report_json = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::runtime(format!("cannot encode report: {e}")))?;
    ctx.write_text("comparison.json", &(report_json + "\n"))?;

    ctx.write_manifest(
        "compare",
        json!({
            "episodes": report.episodes.len(),
            "high_success_rate": report.high.map(|s| s.success_rate),
            "standard_success_rate": report.standard.map(|s| s.success_rate),
            "artifacts": { "csv": "comparison.csv", "json": "comparison.json" },
        }),
    )?;

    match (&report.high, &report.standard) {
        (Some(high), Some(standard)) => println!(
            "compare: high {:.0}% vs standard {:.0}% success over {} episodes",
            high.success_rate * 100.0,
            standard.success_rate * 100.0,
            report.episodes.len()
        ),
        _ => println!("compare: no episodes requested; empty report written"),
    }
    Ok(())
}
