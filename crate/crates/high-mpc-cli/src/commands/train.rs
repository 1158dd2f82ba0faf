//! `train`: fit the traversal-time network to a dataset.

use std::path::Path;

use serde_json::json;

use high_mpc::deep_policy::{load_dataset, save_model, train, Mlp};

use super::Context;
use crate::CliError;

pub fn run(ctx: &Context, dataset_path: &Path) -> Result<(), CliError> {
    let dataset = load_dataset(dataset_path)
        .map_err(|e| CliError::validation(format!("dataset {}: {e}", dataset_path.display())))?;
    // Labels beyond twice the horizon cannot come from this pipeline's
    // collection; treat them as a wrong or corrupted input file.
    let t_max = 2.0 * ctx.config.mpc.horizon_steps as f64 * ctx.config.mpc.dt;
    dataset
        .validate(t_max)
        .map_err(|e| CliError::validation(format!("dataset {}: {e}", dataset_path.display())))?;

    let train_config = ctx.config.train_config();
    let initial = Mlp::new(ctx.config.seed);
    let (model, history) = train(&initial, &dataset, &train_config)
        .map_err(|e| CliError::runtime(format!("training failed: {e}")))?;

    let model_path = ctx.out_dir()?.join("model.txt");
    save_model(&model, &model_path)
        .map_err(|e| CliError::runtime(format!("cannot write model: {e}")))?;
    ctx.write_text("loss_history.csv", &history.to_csv())?;

    let final_mse = history
        .final_validation_loss()
        .ok_or_else(|| CliError::runtime("training produced no epochs"))?;

    ctx.write_manifest(
        "train",
        json!({
            "samples": dataset.len(),
            "epochs": history.train_loss.len(),
            "final_validation_mse": final_mse,
            "artifacts": { "model": "model.txt", "loss_history": "loss_history.csv" },
        }),
    )?;

    println!("train: final validation MSE {final_mse:.6e} after {} epochs", history.train_loss.len());
    Ok(())
}
