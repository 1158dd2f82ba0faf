//! Scoring a flight log.
//!
//! The crossing instant almost never lands on a control step, so the
//! plane crossing is located by linear interpolation between the two
//! bracketing states — at 0.04 s steps and ~2 m/s forward speed the
//! nearest-step answer would be off by up to 8 cm, a large fraction of
//! the success threshold.

use serde::Serialize;

use super::EpisodeLog;

/// A traversal counts as a success when the vehicle passes within this
/// distance of the gate center (m). Matches the magnitude of the errors
/// the planners actually achieve; the gate has no modeled extent.
pub const SUCCESS_THRESHOLD: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraversalMetrics {
    /// Interpolated instant the vehicle reached the gate plane; `None`
    /// if it never did.
    pub crossing_time: Option<f64>,
    /// Euclidean y–z distance between vehicle and gate center at the
    /// crossing instant. Absent — not zero — without a crossing.
    pub crossing_error: Option<f64>,
    pub success: bool,
    /// RMS of the vehicle's y position over the whole episode; measures
    /// oscillation about the straight line to the goal (the scenario
    /// keeps gate rest position and goal at y = 0).
    pub y_rms: f64,
    /// Largest |y| seen at or after the crossing, if one happened.
    pub post_crossing_max_y: Option<f64>,
    /// Solve-time statistics over the episode's MPC calls, seconds.
    pub mean_solve_time: f64,
    pub max_solve_time: f64,
}

/// Score one log against the gate plane at `gate_plane_x`.
pub fn traversal_metrics(log: &EpisodeLog, gate_plane_x: f64) -> TraversalMetrics {
    let trajectory = log.trajectory();

    let mut crossing_time = None;
    let mut crossing_error = None;
    for pair in trajectory.windows(2) {
        let (t0, q0, g0) = &pair[0];
        let (t1, q1, g1) = &pair[1];
        let (x0, x1) = (q0.position.x, q1.position.x);
        let alpha = if x0 >= gate_plane_x {
            // Already at or past the plane on the first sample.
            Some(0.0)
        } else if x1 >= gate_plane_x {
            Some((gate_plane_x - x0) / (x1 - x0))
        } else {
            None
        };
        if let Some(alpha) = alpha {
            crossing_time = Some(t0 + alpha * (t1 - t0));
            let quad = q0.position.lerp(&q1.position, alpha);
            let gate = g0.position.lerp(&g1.position, alpha);
            let dy = quad.y - gate.y;
            let dz = quad.z - gate.z;
            crossing_error = Some((dy * dy + dz * dz).sqrt());
            break;
        }
    }

    let n = trajectory.len() as f64;
    let y_rms = (trajectory.iter().map(|(_, q, _)| q.position.y.powi(2)).sum::<f64>() / n).sqrt();
    let post_crossing_max_y = crossing_time.map(|tc| {
        trajectory
            .iter()
            .filter(|(t, _, _)| *t >= tc)
            .map(|(_, q, _)| q.position.y.abs())
            .fold(0.0, f64::max)
    });

    let (mean_solve_time, max_solve_time) = if log.steps.is_empty() {
        (0.0, 0.0)
    } else {
        let sum: f64 = log.steps.iter().map(|s| s.solve_time).sum();
        let max = log.steps.iter().map(|s| s.solve_time).fold(0.0, f64::max);
        (sum / log.steps.len() as f64, max)
    };

    TraversalMetrics {
        crossing_time,
        crossing_error,
        success: crossing_error.is_some_and(|e| e <= SUCCESS_THRESHOLD),
        y_rms,
        post_crossing_max_y,
        mean_solve_time,
        max_solve_time,
    }
}
