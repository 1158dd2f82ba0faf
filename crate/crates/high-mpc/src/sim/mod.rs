//! Closed-loop experiments: fly the controller against the ground-truth
//! integrators, log every step, and score the traversal.
//!
//! The loop in [`run_episode`] mirrors deployment: regenerate the gate
//! reference from the current pendulum state, pick a traversal time
//! (network, countdown, or none), solve the receding-horizon problem
//! warm-started from the previous step, and apply only the first
//! command through the RK4 ground truth. [`traversal_metrics`] turns a
//! log into the numbers the experiments compare: interpolated crossing
//! error, success, y oscillation, and solve-time statistics.

mod compare;
mod episode;
mod metrics;

pub use compare::{compare_controllers, ComparisonEpisode, ComparisonReport, ControllerSummary};
pub use episode::run_episode;
pub use metrics::{traversal_metrics, TraversalMetrics, SUCCESS_THRESHOLD};

use std::fmt::Write as _;

use nalgebra::Vector3;
use serde::Serialize;
use thiserror::Error;

use crate::deep_policy::random_initial_conditions;
use crate::dynamics::{GateState, PendulumParams, PendulumState, QuadCommand, QuadState};
use crate::mpc::{MpcConfig, MpcError};
use crate::seeding::seeded_rng;

/// Who chooses the traversal time each control step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Controller {
    /// The trained network predicts the remaining time to traversal from
    /// the current observation.
    HighMpc,
    /// The traversal instant is fixed relative to the episode start;
    /// each receding solve receives the remaining time, counted down to
    /// zero.
    StaticTraversal { t_tra: f64 },
    /// Constant tracking weights at every stage — the baseline with no
    /// notion of a traversal time.
    StandardMpc,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeConfig {
    pub controller: Controller,
    pub initial_quad: QuadState,
    pub initial_pendulum: PendulumState,
    pub pendulum: PendulumParams,
    /// Hover goal behind the gate.
    pub goal_position: Vector3<f64>,
    /// The tracking mode inside is overridden to match the controller.
    pub mpc: MpcConfig,
    pub max_steps: usize,
    /// Seed this episode was drawn from; recorded for provenance, not
    /// consumed again.
    pub seed: u64,
}

impl EpisodeConfig {
    /// The fixed scenario: vehicle hovering before the gate, pendulum
    /// released horizontally.
    pub fn scenario(controller: Controller) -> Self {
        Self {
            controller,
            initial_quad: QuadState::hover_at(Vector3::new(-1.0, 0.0, 2.0)),
            initial_pendulum: PendulumState::new(std::f64::consts::FRAC_PI_2, 0.0),
            pendulum: PendulumParams::default(),
            goal_position: Vector3::new(4.0, 0.0, 2.0),
            mpc: MpcConfig::default(),
            max_steps: 250,
            seed: 0,
        }
    }

    /// Episode with initial conditions drawn from the collection ranges.
    /// The same seed gives the same start whatever the controller, which
    /// is what makes controller comparisons matched.
    pub fn randomized(seed: u64, controller: Controller) -> Self {
        let mut rng = seeded_rng(seed);
        let (initial_quad, initial_pendulum) = random_initial_conditions(&mut rng);
        Self { controller, initial_quad, initial_pendulum, seed, ..Self::scenario(controller) }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.mpc.validate()?;
        self.initial_quad.validate().map_err(MpcError::from)?;
        self.pendulum
            .validate()
            .map_err(|e| SimError::InvalidConfig(e.to_string()))?;
        if !self.initial_pendulum.is_finite() {
            return Err(SimError::InvalidConfig("non-finite pendulum state".into()));
        }
        if self.max_steps == 0 {
            return Err(SimError::InvalidConfig("max_steps must be positive".into()));
        }
        if let Controller::StaticTraversal { t_tra } = self.controller {
            if !t_tra.is_finite() || t_tra < 0.0 {
                return Err(SimError::InvalidConfig(format!(
                    "static traversal time must be non-negative, got {t_tra}"
                )));
            }
        }
        Ok(())
    }
}

/// How an episode ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TerminalStatus {
    /// The vehicle reached the gate plane.
    Crossed,
    /// Step budget exhausted before the plane.
    Timeout,
    /// States went non-finite, left the arena, or the solver failed.
    Diverged,
}

/// One control step: the state the solve saw and the command it applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub time: f64,
    pub quad: QuadState,
    pub gate: GateState,
    pub command: QuadCommand,
    /// Traversal time handed to the solver; absent in standard mode.
    pub t_tra: Option<f64>,
    /// Wall-clock solve time, seconds. Varies between runs; excluded
    /// from determinism comparisons.
    pub solve_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub steps: Vec<StepRecord>,
    /// State after the last applied command; the crossing usually falls
    /// between the last step and here.
    pub final_quad: QuadState,
    pub final_gate: GateState,
    pub status: TerminalStatus,
}

impl EpisodeLog {
    /// All visited vehicle/gate states with their times: the per-step
    /// entries plus the terminal state one step later.
    pub fn trajectory(&self) -> Vec<(f64, QuadState, GateState)> {
        let mut out: Vec<(f64, QuadState, GateState)> =
            self.steps.iter().map(|s| (s.time, s.quad, s.gate)).collect();
        let final_time = self.steps.last().map_or(0.0, |s| s.time) + self.dt_estimate();
        out.push((final_time, self.final_quad, self.final_gate));
        out
    }

    fn dt_estimate(&self) -> f64 {
        match self.steps.as_slice() {
            [.., a, b] => b.time - a.time,
            _ => 0.0,
        }
    }

    /// Bit-compare everything except wall-clock solve times, which are
    /// the one nondeterministic quantity in a log.
    pub fn same_trajectory(&self, other: &EpisodeLog) -> bool {
        let state_eq = |a: &QuadState, b: &QuadState| {
            a.to_vector().iter().zip(b.to_vector().iter()).all(|(x, y)| x.to_bits() == y.to_bits())
        };
        let gate_eq = |a: &GateState, b: &GateState| {
            a.to_vector().iter().zip(b.to_vector().iter()).all(|(x, y)| x.to_bits() == y.to_bits())
        };
        self.status == other.status
            && self.steps.len() == other.steps.len()
            && state_eq(&self.final_quad, &other.final_quad)
            && gate_eq(&self.final_gate, &other.final_gate)
            && self.steps.iter().zip(&other.steps).all(|(a, b)| {
                a.time.to_bits() == b.time.to_bits()
                    && state_eq(&a.quad, &b.quad)
                    && gate_eq(&a.gate, &b.gate)
                    && a.command.to_vector().iter().zip(b.command.to_vector().iter())
                        .all(|(x, y)| x.to_bits() == y.to_bits())
                    && a.t_tra.map(f64::to_bits) == b.t_tra.map(f64::to_bits)
            })
    }

    /// Render as CSV. The terminal state becomes a last row with empty
    /// command, traversal and solve columns — it was never acted on.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "t,p_x,p_y,p_z,v_x,v_y,v_z,q_w,q_x,q_y,q_z,\
             g_p_x,g_p_y,g_p_z,g_v_x,g_v_y,g_v_z,g_q_w,g_q_x,g_q_y,g_q_z,\
             thrust,omega_x,omega_y,omega_z,t_tra,solve_ms\n",
        );
        let floats = |out: &mut String, values: &[f64]| {
            for v in values {
                write!(out, "{v:.16e},").expect("writing to a String cannot fail");
            }
        };
        for s in &self.steps {
            floats(&mut out, &[s.time]);
            floats(&mut out, s.quad.to_vector().as_slice());
            floats(&mut out, s.gate.to_vector().as_slice());
            floats(&mut out, s.command.to_vector().as_slice());
            match s.t_tra {
                Some(t) => write!(out, "{t:.16e},").unwrap(),
                None => out.push(','),
            }
            writeln!(out, "{:.16e}", s.solve_time * 1e3).unwrap();
        }
        let final_time = self.steps.last().map_or(0.0, |s| s.time) + self.dt_estimate();
        floats(&mut out, &[final_time]);
        floats(&mut out, self.final_quad.to_vector().as_slice());
        floats(&mut out, self.final_gate.to_vector().as_slice());
        writeln!(out, ",,,,,").unwrap();
        out
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("the learned-policy controller requires a model")]
    ModelRequired,
    #[error("a model was supplied but the controller does not use one")]
    ModelUnused,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Mpc(#[from] MpcError),
}
