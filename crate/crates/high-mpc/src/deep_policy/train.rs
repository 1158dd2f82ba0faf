//! Mini-batch SGD with momentum for the traversal-time network.
//!
//! The dataset is shuffled once for the train/validation split and again
//! every epoch for batching, all from the caller's seed, so a training
//! run is a pure function of (initial model, dataset, config). Input
//! standardization is estimated on the training split only and stored in
//! the returned model.
//!
//! The learning rate halves whenever the training loss stops improving
//! for [`PLATEAU_PATIENCE`] epochs; with a fixed batch order this makes
//! the smoothed loss curve non-increasing in practice, which the tests
//! assert.

use nalgebra::DVector;
use rand::seq::SliceRandom;

use super::mlp::{Gradients, Mlp, LAYER_SIZES};
use super::{Dataset, DeepPolicyError};
use crate::seeding::seeded_rng;

const MOMENTUM: f64 = 0.9;
const PLATEAU_PATIENCE: usize = 15;
const MIN_LEARNING_RATE: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Fraction of the dataset held out for validation, in `[0, 1)`.
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 64,
            epochs: 500,
            validation_fraction: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), DeepPolicyError> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(DeepPolicyError::InvalidConfig(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(DeepPolicyError::InvalidConfig("batch_size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(DeepPolicyError::InvalidConfig(format!(
                "validation_fraction must be in [0, 1), got {}",
                self.validation_fraction
            )));
        }
        Ok(())
    }
}

/// Per-epoch telemetry. `validation_loss` mirrors `train_loss` when the
/// validation split is empty.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub validation_loss: Vec<f64>,
    pub learning_rates: Vec<f64>,
}

impl TrainHistory {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_mse,validation_mse,learning_rate\n");
        for e in 0..self.train_loss.len() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                e, self.train_loss[e], self.validation_loss[e], self.learning_rates[e]
            ));
        }
        out
    }

    pub fn final_validation_loss(&self) -> Option<f64> {
        self.validation_loss.last().copied()
    }
}

fn mse(mlp: &Mlp, dataset: &Dataset, indices: &[usize]) -> f64 {
    let sum: f64 = indices
        .iter()
        .map(|&i| {
            let r = &dataset.records[i];
            (mlp.forward(&r.observation) - r.t_tra).powi(2)
        })
        .sum();
    sum / indices.len() as f64
}

/// Fit a copy of `mlp` to the dataset; the input model is the
/// initialization and is not modified.
pub fn train(
    mlp: &Mlp,
    dataset: &Dataset,
    config: &TrainConfig,
) -> Result<(Mlp, TrainHistory), DeepPolicyError> {
    config.validate()?;
    mlp.validate()?;
    if dataset.is_empty() {
        return Err(DeepPolicyError::EmptyDataset);
    }

    let mut rng = seeded_rng(config.seed);
    let n = dataset.len();
    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(&mut rng);
    let n_val = (config.validation_fraction * n as f64).floor() as usize;
    let (val_idx, train_idx) = indices.split_at(n_val);
    let val_idx = val_idx.to_vec();
    let mut train_idx = train_idx.to_vec();

    let mut model = mlp.clone();
    model.set_standardization(
        feature_mean(dataset, &train_idx),
        feature_std(dataset, &train_idx),
    );

    let mut velocity = Gradients::zeros_like(&model);
    let mut grads = Gradients::zeros_like(&model);
    let mut history = TrainHistory::default();
    let mut learning_rate = config.learning_rate;
    let mut best_loss = f64::INFINITY;
    let mut stale_epochs = 0;

    for epoch in 0..config.epochs {
        train_idx.shuffle(&mut rng);
        for batch in train_idx.chunks(config.batch_size) {
            grads.fill_zero();
            for &i in batch {
                let r = &dataset.records[i];
                model.accumulate_gradient(&r.observation, r.t_tra, &mut grads);
            }
            grads.scale(1.0 / batch.len() as f64);
            for l in 0..model.weights.len() {
                velocity.weights[l] = MOMENTUM * &velocity.weights[l] - learning_rate * &grads.weights[l];
                velocity.biases[l] = MOMENTUM * &velocity.biases[l] - learning_rate * &grads.biases[l];
                model.weights[l] += &velocity.weights[l];
                model.biases[l] += &velocity.biases[l];
            }
        }

        let train_loss = mse(&model, dataset, &train_idx);
        let validation_loss =
            if val_idx.is_empty() { train_loss } else { mse(&model, dataset, &val_idx) };
        if !train_loss.is_finite() || !validation_loss.is_finite() {
            return Err(DeepPolicyError::NonFiniteLoss { epoch, loss: train_loss });
        }
        history.train_loss.push(train_loss);
        history.validation_loss.push(validation_loss);
        history.learning_rates.push(learning_rate);

        if train_loss < best_loss - 1e-12 {
            best_loss = train_loss;
            stale_epochs = 0;
        } else {
            stale_epochs += 1;
            if stale_epochs >= PLATEAU_PATIENCE && learning_rate > MIN_LEARNING_RATE {
                learning_rate = (learning_rate * 0.5).max(MIN_LEARNING_RATE);
                stale_epochs = 0;
                log::debug!("epoch {epoch}: plateau, learning rate now {learning_rate:.2e}");
            }
        }
    }

    Ok((model, history))
}

fn feature_mean(dataset: &Dataset, indices: &[usize]) -> DVector<f64> {
    let mut mean = DVector::zeros(LAYER_SIZES[0]);
    for &i in indices {
        for d in 0..LAYER_SIZES[0] {
            mean[d] += dataset.records[i].observation[d];
        }
    }
    mean / indices.len() as f64
}

fn feature_std(dataset: &Dataset, indices: &[usize]) -> DVector<f64> {
    let mean = feature_mean(dataset, indices);
    let mut var = DVector::zeros(LAYER_SIZES[0]);
    for &i in indices {
        for d in 0..LAYER_SIZES[0] {
            var[d] += (dataset.records[i].observation[d] - mean[d]).powi(2);
        }
    }
    (var / indices.len() as f64).map(f64::sqrt)
}
