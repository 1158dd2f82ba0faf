//! The traversal-time predictor: a fixed 10-32-32-1 fully connected
//! network with ReLU hidden layers and a linear output.
//!
//! Inputs are standardized with per-dimension mean and scale stored
//! inside the model, so a saved file is self-contained: load it and call
//! [`Mlp::forward`]. The raw output is returned unclamped; the consumer
//! decides the valid traversal-time range.
//!
//! Gradients for training are computed in [`Mlp::accumulate_gradient`]
//! by plain reverse-mode accumulation over the three layers; the choice
//! of subgradient at the ReLU kink is 0.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{DeepPolicyError, Observation};
use crate::seeding::seeded_rng;

/// Layer widths, input to output. Fixed: the architecture is part of the
/// model's identity and the file format records it for verification.
pub const LAYER_SIZES: [usize; 4] = [10, 32, 32, 1];

const MODEL_FORMAT_TAG: &str = "high-mpc-model v1";

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    /// `weights[l]` maps activations of layer `l` to pre-activations of
    /// layer `l+1`; shape `LAYER_SIZES[l+1] × LAYER_SIZES[l]`.
    pub(super) weights: Vec<DMatrix<f64>>,
    pub(super) biases: Vec<DVector<f64>>,
    /// Input standardization: the network sees `(o - mean) / scale`.
    pub(super) input_mean: DVector<f64>,
    pub(super) input_scale: DVector<f64>,
}

impl Mlp {
    /// Fresh network: He-normal weights (variance 2/fan-in, the usual
    /// choice for ReLU), zero biases, identity input standardization.
    pub fn new(seed: u64) -> Self {
        let mut rng = seeded_rng(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..LAYER_SIZES.len() - 1 {
            let (fan_out, fan_in) = (LAYER_SIZES[l + 1], LAYER_SIZES[l]);
            let std = (2.0 / fan_in as f64).sqrt();
            weights.push(DMatrix::from_fn(fan_out, fan_in, |_, _| {
                let e: f64 = rng.sample(StandardNormal);
                e * std
            }));
            biases.push(DVector::zeros(fan_out));
        }
        Self {
            weights,
            biases,
            input_mean: DVector::zeros(LAYER_SIZES[0]),
            input_scale: DVector::from_element(LAYER_SIZES[0], 1.0),
        }
    }

    /// Install the input standardization (mean and scale per dimension).
    /// Scales below 1e-8 are lifted to 1e-8 so constant input dimensions
    /// pass through as zeros instead of dividing by zero.
    pub(super) fn set_standardization(&mut self, mean: DVector<f64>, scale: DVector<f64>) {
        assert_eq!(mean.len(), LAYER_SIZES[0]);
        assert_eq!(scale.len(), LAYER_SIZES[0]);
        self.input_mean = mean;
        self.input_scale = scale.map(|s| s.max(1e-8));
    }

    pub fn validate(&self) -> Result<(), DeepPolicyError> {
        let finite = self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
            && self.input_mean.iter().all(|v| v.is_finite())
            && self.input_scale.iter().all(|v| v.is_finite() && *v > 0.0);
        if finite {
            Ok(())
        } else {
            Err(DeepPolicyError::InvalidConfig("non-finite model parameters".into()))
        }
    }

    fn standardized(&self, o: &Observation) -> DVector<f64> {
        DVector::from_fn(LAYER_SIZES[0], |i, _| {
            (o[i] - self.input_mean[i]) / self.input_scale[i]
        })
    }

    /// Predict the traversal time for one observation.
    pub fn forward(&self, o: &Observation) -> f64 {
        let mut a = self.standardized(o);
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            a = w * a + b;
            if l < last {
                a.apply(|v| *v = v.max(0.0));
            }
        }
        a[0]
    }

    /// Predict for a batch; identical to mapping [`Mlp::forward`].
    pub fn forward_batch(&self, os: &[Observation]) -> Vec<f64> {
        os.iter().map(|o| self.forward(o)).collect()
    }

    /// Squared prediction error for one sample, with its parameter
    /// gradient added into `grads`. Returns the sample's squared error so
    /// the caller can assemble batch losses without a second pass.
    pub(super) fn accumulate_gradient(
        &self,
        o: &Observation,
        target: f64,
        grads: &mut Gradients,
    ) -> f64 {
        let layers = self.weights.len();
        // Forward pass, keeping post-activations (`acts`) and hidden
        // pre-activations (`pre`) for the backward sweep.
        let mut acts = Vec::with_capacity(layers + 1);
        acts.push(self.standardized(o));
        let mut pre = Vec::with_capacity(layers - 1);
        for l in 0..layers {
            let z = &self.weights[l] * &acts[l] + &self.biases[l];
            if l < layers - 1 {
                pre.push(z.clone());
                acts.push(z.map(|v| v.max(0.0)));
            } else {
                acts.push(z);
            }
        }
        let err = acts[layers][0] - target;

        // Backward: δ starts as d(err²)/d(output) and is pulled through
        // each layer; the ReLU gate zeroes entries whose pre-activation
        // was non-positive.
        let mut delta = DVector::from_element(1, 2.0 * err);
        for l in (0..layers).rev() {
            grads.weights[l] += &delta * acts[l].transpose();
            grads.biases[l] += &delta;
            if l > 0 {
                delta = self.weights[l].tr_mul(&delta);
                for (d, z) in delta.iter_mut().zip(pre[l - 1].iter()) {
                    if *z <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
        }
        err * err
    }
}

/// Parameter-shaped accumulator for batch gradients.
#[derive(Debug, Clone)]
pub(super) struct Gradients {
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
}

impl Gradients {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        Self {
            weights: mlp.weights.iter().map(|w| DMatrix::zeros(w.nrows(), w.ncols())).collect(),
            biases: mlp.biases.iter().map(|b| DVector::zeros(b.len())).collect(),
        }
    }

    pub fn fill_zero(&mut self) {
        self.weights.iter_mut().for_each(|w| w.fill(0.0));
        self.biases.iter_mut().for_each(|b| b.fill(0.0));
    }

    pub fn scale(&mut self, s: f64) {
        self.weights.iter_mut().for_each(|w| *w *= s);
        self.biases.iter_mut().for_each(|b| *b *= s);
    }
}

/// Serialize with enough digits that parsing recovers the exact bits.
fn fmt_floats(values: impl Iterator<Item = f64>) -> String {
    let mut out = String::new();
    for (i, v) in values.enumerate() {
        if i > 0 {
            out.push(' ');
        }
        write!(out, "{v:.16e}").expect("writing to a String cannot fail");
    }
    out
}

/// Write the model as self-describing text: a format tag, the layer
/// sizes, the standardization vectors, then each layer's weight matrix
/// (row-major) and bias vector.
pub fn save_model(mlp: &Mlp, path: &Path) -> Result<(), DeepPolicyError> {
    mlp.validate()?;
    let mut out = String::new();
    writeln!(out, "{MODEL_FORMAT_TAG}").unwrap();
    writeln!(
        out,
        "layers {}",
        LAYER_SIZES.map(|s| s.to_string()).join(" ")
    )
    .unwrap();
    writeln!(out, "input_mean {}", fmt_floats(mlp.input_mean.iter().copied())).unwrap();
    writeln!(out, "input_scale {}", fmt_floats(mlp.input_scale.iter().copied())).unwrap();
    for (l, (w, b)) in mlp.weights.iter().zip(&mlp.biases).enumerate() {
        writeln!(out, "weight {l} {} {}", w.nrows(), w.ncols()).unwrap();
        for r in 0..w.nrows() {
            writeln!(out, "{}", fmt_floats(w.row(r).iter().copied())).unwrap();
        }
        writeln!(out, "bias {l} {}", b.len()).unwrap();
        writeln!(out, "{}", fmt_floats(b.iter().copied())).unwrap();
    }
    std::fs::write(path, out)?;
    Ok(())
}

struct Lines<'a> {
    iter: std::str::Lines<'a>,
    number: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<&'a str, DeepPolicyError> {
        self.number += 1;
        self.iter.next().ok_or(DeepPolicyError::Parse {
            line: self.number,
            reason: "unexpected end of file".into(),
        })
    }

    fn error(&self, reason: impl Into<String>) -> DeepPolicyError {
        DeepPolicyError::Parse { line: self.number, reason: reason.into() }
    }

    fn floats(&mut self, expected: usize) -> Result<Vec<f64>, DeepPolicyError> {
        let line = self.next()?;
        let values: Result<Vec<f64>, _> =
            line.split_whitespace().map(str::parse::<f64>).collect();
        let values = values.map_err(|e| self.error(format!("bad float: {e}")))?;
        if values.len() != expected {
            return Err(self.error(format!("expected {expected} values, got {}", values.len())));
        }
        Ok(values)
    }
}

pub fn load_model(path: &Path) -> Result<Mlp, DeepPolicyError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = Lines { iter: text.lines(), number: 0 };

    let tag = lines.next()?;
    if tag != MODEL_FORMAT_TAG {
        return Err(lines.error(format!("unrecognized format tag {tag:?}")));
    }
    let layer_line = lines.next()?;
    let expected = format!("layers {}", LAYER_SIZES.map(|s| s.to_string()).join(" "));
    if layer_line != expected {
        return Err(lines.error(format!("architecture mismatch: {layer_line:?}")));
    }

    let tagged_floats =
        |lines: &mut Lines, tag: &str, n: usize| -> Result<Vec<f64>, DeepPolicyError> {
            let line = lines.next()?;
            let Some(rest) = line.strip_prefix(tag) else {
                return Err(lines.error(format!("expected {tag:?} line")));
            };
            let values: Result<Vec<f64>, _> =
                rest.split_whitespace().map(str::parse::<f64>).collect();
            let values = values.map_err(|e| lines.error(format!("bad float: {e}")))?;
            if values.len() != n {
                return Err(lines.error(format!("expected {n} values, got {}", values.len())));
            }
            Ok(values)
        };

    let input_mean = DVector::from_vec(tagged_floats(&mut lines, "input_mean", LAYER_SIZES[0])?);
    let input_scale = DVector::from_vec(tagged_floats(&mut lines, "input_scale", LAYER_SIZES[0])?);

    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for l in 0..LAYER_SIZES.len() - 1 {
        let (rows, cols) = (LAYER_SIZES[l + 1], LAYER_SIZES[l]);
        let header = lines.next()?;
        if header != format!("weight {l} {rows} {cols}") {
            return Err(lines.error(format!("expected weight header for layer {l}, got {header:?}")));
        }
        let mut w = DMatrix::zeros(rows, cols);
        for r in 0..rows {
            let row = lines.floats(cols)?;
            for (c, v) in row.into_iter().enumerate() {
                w[(r, c)] = v;
            }
        }
        weights.push(w);
        let header = lines.next()?;
        if header != format!("bias {l} {rows}") {
            return Err(lines.error(format!("expected bias header for layer {l}, got {header:?}")));
        }
        biases.push(DVector::from_vec(lines.floats(rows)?));
    }

    let mlp = Mlp { weights, biases, input_mean, input_scale };
    mlp.validate()?;
    Ok(mlp)
}
