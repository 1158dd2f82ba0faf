//! Box-constrained strictly convex quadratic programs.
//!
//! Minimizes `x' H x / 2 + g' x` subject to `lb <= x <= ub` with a primal
//! active-set method: free variables are solved by Cholesky on the reduced
//! system, a blocking bound clips each step, and bound variables are
//! released one at a time by the most negative multiplier. Deterministic by
//! construction (no randomization, smallest-index tie-breaking), which the
//! solver above relies on for bit-identical re-solves.

use nalgebra::{Cholesky, DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QpError {
    #[error("infeasible box: lb[{index}] = {lb} > ub[{index}] = {ub}")]
    InfeasibleBox { index: usize, lb: f64, ub: f64 },
    #[error("reduced Hessian is not positive definite")]
    NotPositiveDefinite,
}

const FEAS_TOL: f64 = 1e-12;
const KKT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Status {
    Free,
    AtLower,
    AtUpper,
}

/// Solve the box QP. `h` must be symmetric positive definite.
///
/// Cold-start entry; production code always has a working-set hint and
/// calls [`solve_box_qp_warm`] directly, so this wrapper only serves the
/// oracle tests.
#[cfg_attr(not(test), allow(dead_code))]
pub fn solve_box_qp(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    lb: &DVector<f64>,
    ub: &DVector<f64>,
) -> Result<DVector<f64>, QpError> {
    solve_box_qp_warm(h, g, lb, ub, &mut Vec::new())
}

/// Like [`solve_box_qp`], seeding the working set from `hint` and writing
/// the final working set back into it. Successive related problems (the
/// SQP outer loop re-solves with a slowly drifting Hessian) then converge
/// in one or two factorizations instead of rebuilding the active set from
/// scratch. An empty or wrong-length hint falls back to the cold heuristic.
pub(crate) fn solve_box_qp_warm(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    lb: &DVector<f64>,
    ub: &DVector<f64>,
    hint: &mut Vec<Status>,
) -> Result<DVector<f64>, QpError> {
    let n = g.len();
    for i in 0..n {
        if lb[i] > ub[i] {
            return Err(QpError::InfeasibleBox { index: i, lb: lb[i], ub: ub[i] });
        }
    }

    let mut x = DVector::zeros(n);
    let mut status = vec![Status::Free; n];
    if hint.len() == n {
        for i in 0..n {
            // The hint chooses the working set; the start point is the
            // corresponding bound, or the clamped origin for free entries,
            // which is feasible either way.
            status[i] = if lb[i] == ub[i] { Status::AtLower } else { hint[i] };
            x[i] = match status[i] {
                Status::AtLower => lb[i],
                Status::AtUpper => ub[i],
                Status::Free => 0f64.clamp(lb[i], ub[i]),
            };
        }
    } else {
        for i in 0..n {
            // Equal bounds pin the variable permanently; otherwise start from
            // the clamped origin.
            if lb[i] == ub[i] {
                x[i] = lb[i];
                status[i] = Status::AtLower;
            } else if 0.0 <= lb[i] {
                x[i] = lb[i];
                status[i] = Status::AtLower;
            } else if 0.0 >= ub[i] {
                x[i] = ub[i];
                status[i] = Status::AtUpper;
            }
        }
    }

    let max_iters = 30 * n.max(4);
    for _ in 0..max_iters {
        let free: Vec<usize> = (0..n).filter(|&i| status[i] == Status::Free).collect();

        // Candidate minimizer with the current active set held fixed.
        let mut candidate = x.clone();
        if !free.is_empty() {
            let m = free.len();
            let mut h_ff = DMatrix::zeros(m, m);
            let mut rhs = DVector::zeros(m);
            for (r, &i) in free.iter().enumerate() {
                let mut acc = g[i];
                for j in 0..n {
                    if status[j] != Status::Free {
                        acc += h[(i, j)] * x[j];
                    }
                }
                rhs[r] = -acc;
                for (c, &j) in free.iter().enumerate() {
                    h_ff[(r, c)] = h[(i, j)];
                }
            }
            let chol = Cholesky::new(h_ff).ok_or(QpError::NotPositiveDefinite)?;
            let x_f = chol.solve(&rhs);
            for (r, &i) in free.iter().enumerate() {
                candidate[i] = x_f[r];
            }
        }

        let step_norm = free.iter().map(|&i| (candidate[i] - x[i]).abs()).fold(0.0, f64::max);
        if step_norm <= FEAS_TOL {
            // At the minimizer for this active set; release the worst
            // wrongly-signed bound or declare optimality.
            let grad = h * &x + g;
            let mut worst: Option<(usize, f64)> = None;
            for i in 0..n {
                if lb[i] == ub[i] {
                    continue;
                }
                let score = match status[i] {
                    Status::AtLower => grad[i],
                    Status::AtUpper => -grad[i],
                    Status::Free => continue,
                };
                if score < -KKT_TOL && worst.map_or(true, |(_, s)| score < s) {
                    worst = Some((i, score));
                }
            }
            match worst {
                Some((i, _)) => status[i] = Status::Free,
                None => {
                    *hint = status;
                    return Ok(x);
                }
            }
            continue;
        }

        // Walk toward the candidate until a bound blocks.
        let mut alpha = 1.0;
        let mut blocker: Option<(usize, Status)> = None;
        for &i in &free {
            let p = candidate[i] - x[i];
            if p > FEAS_TOL {
                let room = (ub[i] - x[i]) / p;
                if room < alpha {
                    alpha = room;
                    blocker = Some((i, Status::AtUpper));
                }
            } else if p < -FEAS_TOL {
                let room = (lb[i] - x[i]) / p;
                if room < alpha {
                    alpha = room;
                    blocker = Some((i, Status::AtLower));
                }
            }
        }
        for &i in &free {
            x[i] += alpha * (candidate[i] - x[i]);
        }
        if let Some((i, side)) = blocker {
            x[i] = match side {
                Status::AtUpper => ub[i],
                _ => lb[i],
            };
            status[i] = side;
        }
    }

    log::warn!("box QP hit the active-set iteration cap; returning feasible iterate");
    *hint = status;
    Ok(x)
}
