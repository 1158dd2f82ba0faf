//! On-disk training data: one `(observation, t_tra)` pair per CSV row.
//!
//! Rows are written with enough digits that loading recovers the exact
//! bits, so a dataset can be collected in chunks, appended, hashed, and
//! re-split without drift.

use std::fmt::Write as _;
use std::path::Path;

use super::{DeepPolicyError, Observation};

pub const DATASET_HEADER: &str = "o_0,o_1,o_2,o_3,o_4,o_5,o_6,o_7,o_8,o_9,t_tra";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetRecord {
    pub observation: Observation,
    pub t_tra: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub records: Vec<DatasetRecord>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn push(&mut self, observation: Observation, t_tra: f64) {
        self.records.push(DatasetRecord { observation, t_tra });
    }

    /// Check the labels lie in the valid traversal range `[0, t_max]` and
    /// everything is finite. `t_max` comes from the consumer (twice the
    /// planning horizon); the file format itself does not know it.
    pub fn validate(&self, t_max: f64) -> Result<(), DeepPolicyError> {
        for (i, r) in self.records.iter().enumerate() {
            if !r.observation.iter().all(|v| v.is_finite()) || !r.t_tra.is_finite() {
                return Err(DeepPolicyError::InvalidConfig(format!(
                    "record {i} contains non-finite values"
                )));
            }
            if r.t_tra < 0.0 || r.t_tra > t_max {
                return Err(DeepPolicyError::InvalidConfig(format!(
                    "record {i}: t_tra {} outside [0, {t_max}]",
                    r.t_tra
                )));
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(DATASET_HEADER);
        out.push('\n');
        for r in &self.records {
            for v in r.observation.iter() {
                write!(out, "{v:.16e},").expect("writing to a String cannot fail");
            }
            writeln!(out, "{:.16e}", r.t_tra).expect("writing to a String cannot fail");
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, DeepPolicyError> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(DeepPolicyError::Parse {
            line: 1,
            reason: "empty file".into(),
        })?;
        if header != DATASET_HEADER {
            return Err(DeepPolicyError::Parse {
                line: 1,
                reason: format!("unexpected header {header:?}"),
            });
        }
        let mut records = Vec::new();
        for (idx, line) in lines {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 11 {
                return Err(DeepPolicyError::Parse {
                    line: idx + 1,
                    reason: format!("expected 11 columns, got {}", fields.len()),
                });
            }
            let mut values = [0.0; 11];
            for (v, f) in values.iter_mut().zip(&fields) {
                *v = f.parse().map_err(|e| DeepPolicyError::Parse {
                    line: idx + 1,
                    reason: format!("bad float {f:?}: {e}"),
                })?;
            }
            records.push(DatasetRecord {
                observation: Observation::from_column_slice(&values[..10]),
                t_tra: values[10],
            });
        }
        Ok(Self { records })
    }
}

pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<(), DeepPolicyError> {
    std::fs::write(path, dataset.to_csv())?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Dataset, DeepPolicyError> {
    Dataset::from_csv(&std::fs::read_to_string(path)?)
}
