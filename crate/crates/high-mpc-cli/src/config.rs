//! The experiment configuration file.
//!
//! One TOML file describes an experiment end to end; the subcommands read
//! the sections they need and ignore the rest. Unknown keys anywhere in
//! the file are rejected rather than silently dropped — a typo in a
//! weight name must not produce a subtly different experiment. Flags
//! (`--seed`, `--out`, `--workers`, `--iters`) override single scalar
//! fields and nothing else, so the file stays the record of what ran.
//!
//! Every section has defaults; the empty file is a valid experiment.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use high_mpc::deep_policy::{CollectConfig, TrainConfig};
use high_mpc::dynamics::PendulumParams;
use high_mpc::mpc::MpcConfig;
use high_mpc::policy_search::{GaussianPolicy, SearchConfig};
use high_mpc::sim::{Controller, EpisodeConfig};
use nalgebra::Vector3;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Experiment name, recorded in manifests.
    pub name: String,
    /// Directory all artifacts go to; `--out` overrides.
    pub output_dir: PathBuf,
    /// Master seed. Sections derive their randomness from this one value,
    /// so a config file plus a seed pins every artifact.
    pub seed: u64,
    /// Worker threads for the parallel sections; 0 means all cores.
    /// Results are identical for any value — this is purely throughput.
    pub workers: usize,
    pub mpc: MpcConfig,
    pub pendulum: PendulumParams,
    /// Hover goal behind the gate, shared by every command.
    pub goal_position: [f64; 3],
    pub search: SearchSection,
    pub collect: CollectSection,
    pub train: TrainConfig,
    pub sim: SimSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            name: "swing-gate".into(),
            output_dir: PathBuf::from("out"),
            seed: 0,
            workers: 0,
            mpc: MpcConfig::default(),
            pendulum: PendulumParams::default(),
            goal_position: [4.0, 0.0, 2.0],
            search: SearchSection::default(),
            collect: CollectSection::default(),
            train: TrainConfig::default(),
            sim: SimSection::default(),
        }
    }
}

/// Policy-search knobs plus the starting policy. The seed is deliberately
/// not a key here: it comes from the top level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSection {
    pub initial_mean: f64,
    pub initial_std: f64,
    pub beta: f64,
    pub num_samples: usize,
    pub max_iters: usize,
    pub reward_window: usize,
    pub convergence_tol: f64,
}

impl Default for SearchSection {
    fn default() -> Self {
        let base = SearchConfig::default();
        Self {
            initial_mean: 1.0,
            initial_std: 0.5,
            beta: base.beta,
            num_samples: base.num_samples,
            max_iters: base.max_iters,
            reward_window: base.reward_window,
            convergence_tol: base.convergence_tol,
        }
    }
}

impl SearchSection {
    pub fn initial_policy(&self) -> GaussianPolicy {
        GaussianPolicy::scalar(self.initial_mean, self.initial_std)
    }

    pub fn to_config(&self, seed: u64) -> SearchConfig {
        SearchConfig {
            beta: self.beta,
            num_samples: self.num_samples,
            max_iters: self.max_iters,
            reward_window: self.reward_window,
            convergence_tol: self.convergence_tol,
            seed,
        }
    }
}

/// Data-collection scale. Pendulum and goal come from the shared
/// top-level keys so collection flies the same scenario the other
/// commands do.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollectSection {
    pub episodes: usize,
    pub max_steps: usize,
    pub inner_samples: usize,
    pub inner_iters: usize,
}

impl Default for CollectSection {
    fn default() -> Self {
        let base = CollectConfig::default();
        Self {
            episodes: base.episodes,
            max_steps: base.max_steps,
            inner_samples: base.inner_samples,
            inner_iters: base.inner_iters,
        }
    }
}

/// Which controller closed-loop episodes fly and how many.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub controller: ControllerKind,
    /// Traversal instant for the `static` controller, seconds from
    /// episode start.
    pub t_tra: f64,
    /// Episode count for `run` (with `randomize = true`) and `compare`.
    pub episodes: usize,
    pub max_steps: usize,
    /// `false` flies the one fixed scenario; `true` draws initial
    /// conditions per episode from the collection ranges.
    pub randomize: bool,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            controller: ControllerKind::HighMpc,
            t_tra: 1.25,
            episodes: 20,
            max_steps: 250,
            randomize: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    HighMpc,
    Static,
    Standard,
}

impl RunConfig {
    pub fn goal(&self) -> Vector3<f64> {
        Vector3::from(self.goal_position)
    }

    pub fn controller(&self) -> Controller {
        match self.sim.controller {
            ControllerKind::HighMpc => Controller::HighMpc,
            ControllerKind::Static => Controller::StaticTraversal { t_tra: self.sim.t_tra },
            ControllerKind::Standard => Controller::StandardMpc,
        }
    }

    pub fn collect_config(&self) -> CollectConfig {
        CollectConfig {
            episodes: self.collect.episodes,
            seed: self.seed,
            pendulum: self.pendulum,
            goal_position: self.goal(),
            max_steps: self.collect.max_steps,
            inner_samples: self.collect.inner_samples,
            inner_iters: self.collect.inner_iters,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig { seed: self.seed, ..self.train.clone() }
    }

    /// Episode template for `run` and `compare`; initial conditions are
    /// the fixed scenario's until a randomized draw replaces them.
    pub fn episode_config(&self) -> EpisodeConfig {
        EpisodeConfig {
            pendulum: self.pendulum,
            goal_position: self.goal(),
            mpc: self.mpc.clone(),
            max_steps: self.sim.max_steps,
            seed: self.seed,
            ..EpisodeConfig::scenario(self.controller())
        }
    }

    /// Cross-field checks the per-section validators cannot see.
    pub fn validate(&self) -> Result<(), CliError> {
        self.mpc.validate().map_err(|e| CliError::validation(format!("mpc: {e}")))?;
        self.collect_config()
            .validate()
            .map_err(|e| CliError::validation(format!("collect: {e}")))?;
        self.train_config()
            .validate()
            .map_err(|e| CliError::validation(format!("train: {e}")))?;
        self.search
            .to_config(self.seed)
            .validate()
            .map_err(|e| CliError::validation(format!("search: {e}")))?;
        if !(self.search.initial_std > 0.0 && self.search.initial_std.is_finite()) {
            return Err(CliError::validation(format!(
                "search: initial_std must be positive, got {}",
                self.search.initial_std
            )));
        }
        if !self.search.initial_mean.is_finite() {
            return Err(CliError::validation("search: initial_mean must be finite"));
        }
        if !(self.sim.t_tra >= 0.0 && self.sim.t_tra.is_finite()) {
            return Err(CliError::validation(format!(
                "sim: t_tra must be non-negative, got {}",
                self.sim.t_tra
            )));
        }
        if self.sim.max_steps == 0 {
            return Err(CliError::validation("sim: max_steps must be positive"));
        }
        Ok(())
    }
}

/// A parsed config together with the digest of the exact bytes it came
/// from. The digest goes into every manifest, so an artifact can always
/// be traced back to the file that produced it.
pub struct LoadedConfig {
    pub config: RunConfig,
    pub sha256: String,
}

pub fn load_config(path: &Path) -> Result<LoadedConfig, CliError> {
    let bytes = std::fs::read(path).map_err(|e| {
        CliError::validation(format!("cannot read config {}: {e}", path.display()))
    })?;
    let text = std::str::from_utf8(&bytes)
        .map_err(|e| CliError::validation(format!("config is not UTF-8: {e}")))?;
    let config: RunConfig = toml::from_str(text)
        .map_err(|e| CliError::validation(format!("config {}: {e}", path.display())))?;
    config.validate()?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    let sha256 = hasher.finalize().iter().map(|b| format!("{b:02x}")).collect();
    Ok(LoadedConfig { config, sha256 })
}
