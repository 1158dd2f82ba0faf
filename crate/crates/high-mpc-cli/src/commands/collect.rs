//! `collect`: build the labelled observation dataset.

use serde_json::json;

use high_mpc::deep_policy::{collect, load_dataset, save_dataset};

use super::Context;
use crate::CliError;

pub const DATASET_FILE: &str = "dataset.csv";

pub fn run(ctx: &Context, append: bool) -> Result<(), CliError> {
    let collect_config = ctx.config.collect_config();
    let solver = ctx.solver()?;

    let fresh = collect(&solver, &collect_config)
        .map_err(|e| CliError::runtime(format!("collection failed: {e}")))?;
    let new_rows = fresh.len();

    let path = ctx.out_dir()?.join(DATASET_FILE);
    let mut dataset = fresh;
    let mut previous_rows = 0;
    if append && path.exists() {
        let mut existing = load_dataset(&path)
            .map_err(|e| CliError::validation(format!("existing dataset: {e}")))?;
        previous_rows = existing.len();
        existing.records.extend(dataset.records);
        dataset = existing;
    }
    save_dataset(&dataset, &path)
        .map_err(|e| CliError::runtime(format!("cannot write dataset: {e}")))?;

    // Appends must be strictly additive; re-read and count.
    let written = load_dataset(&path)
        .map_err(|e| CliError::runtime(format!("verifying dataset: {e}")))?
        .len();
    if written != previous_rows + new_rows {
        return Err(CliError::runtime(format!(
            "dataset row count mismatch after write: {written} on disk, expected {previous_rows} + {new_rows}"
        )));
    }

    ctx.write_manifest(
        "collect",
        json!({
            "episodes": collect_config.episodes,
            "new_samples": new_rows,
            "total_samples": written,
            "appended": append && previous_rows > 0,
            "artifacts": { "dataset": DATASET_FILE },
        }),
    )?;

    println!(
        "collect: {new_rows} samples from {} episodes ({written} total on disk)",
        collect_config.episodes
    );
    Ok(())
}
