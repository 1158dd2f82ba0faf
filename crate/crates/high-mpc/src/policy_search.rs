//! Episode-based search for the traversal-time decision variable.
//!
//! The controller treats the time at which the vehicle should coincide
//! with the gate as a free scalar. This module finds a good value by
//! iterating a sample–evaluate–reweight loop: draw candidates from a
//! Gaussian policy, solve one trajectory optimization per candidate,
//! score each trajectory by how closely it passes the moving gate, turn
//! scores into soft-max weights, and refit the Gaussian by weighted
//! maximum likelihood. The loop needs no gradients of the reward and
//! each candidate evaluation is independent, so the per-iteration solves
//! run in parallel.

use std::fmt::Write as _;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::dynamics::{GateState, QuadState};
use crate::mpc::{DecisionVariables, MpcError, MpcReference, MpcSolver};
use crate::mpc::MpcSolution;
use crate::seeding::{derive_seed, seeded_rng};

/// Smallest eigenvalue the policy covariance may shrink to. Keeps the
/// sampler alive once the search has concentrated.
pub const COVARIANCE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SearchError {
    #[error("invalid search configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("policy covariance is not positive definite")]
    NotPositiveDefinite,
    #[error("all sample weights vanished; no candidate produced a usable reward")]
    DegenerateWeights,
    #[error(transparent)]
    Mpc(#[from] MpcError),
}

/// A Gaussian distribution over the decision variables. One dimension in
/// practice (the traversal time); the estimator itself is dimension-free.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl GaussianPolicy {
    /// Build a policy, symmetrizing round-off and flooring the covariance
    /// eigenvalues. A covariance that is materially asymmetric or the
    /// wrong shape is rejected.
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self, SearchError> {
        let d = mean.len();
        if covariance.nrows() != d || covariance.ncols() != d {
            return Err(SearchError::InvalidPolicy(format!(
                "covariance is {}x{}, expected {d}x{d}",
                covariance.nrows(),
                covariance.ncols()
            )));
        }
        if d == 0 {
            return Err(SearchError::InvalidPolicy("policy must have at least one dimension".into()));
        }
        if mean.iter().chain(covariance.iter()).any(|v| !v.is_finite()) {
            return Err(SearchError::InvalidPolicy("mean and covariance must be finite".into()));
        }
        let asym = (&covariance - covariance.transpose()).amax();
        if asym > 1e-9 * (1.0 + covariance.amax()) {
            return Err(SearchError::InvalidPolicy(format!(
                "covariance is asymmetric by {asym:.3e}"
            )));
        }
        Ok(Self { mean, covariance: floor_covariance(&covariance) })
    }

    /// One-dimensional policy from a mean and standard deviation.
    pub fn scalar(mean: f64, std_dev: f64) -> Self {
        Self::new(
            DVector::from_element(1, mean),
            DMatrix::from_element(1, 1, std_dev * std_dev),
        )
        .expect("scalar policy construction cannot fail for finite inputs")
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        let rebuilt = Self::new(self.mean.clone(), self.covariance.clone())?;
        let drift = (&rebuilt.covariance - &self.covariance).amax();
        if drift > 1e-9 * (1.0 + self.covariance.amax()) {
            return Err(SearchError::InvalidPolicy(format!(
                "covariance violates the eigenvalue floor by {drift:.3e}"
            )));
        }
        Ok(())
    }
}

/// Clamp the eigenvalues of a symmetric matrix to the covariance floor.
fn floor_covariance(covariance: &DMatrix<f64>) -> DMatrix<f64> {
    let symmetric = (covariance + covariance.transpose()) * 0.5;
    let eigen = symmetric.symmetric_eigen();
    let floored = eigen.eigenvalues.map(|v| v.max(COVARIANCE_FLOOR));
    &eigen.eigenvectors * DMatrix::from_diagonal(&floored) * eigen.eigenvectors.transpose()
}

/// Knobs for the sample–reweight–refit loop.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    /// Inverse temperature of the soft-max over rewards; larger focuses
    /// the update on the best few samples.
    pub beta: f64,
    /// Candidates drawn (and trajectories solved) per iteration.
    pub num_samples: usize,
    pub max_iters: usize,
    /// Stages on each side of the nominal traversal stage scored by the
    /// reward.
    pub reward_window: usize,
    /// Stop when the mean moves less than this between iterations.
    pub convergence_tol: f64,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            beta: 3.0,
            num_samples: 30,
            max_iters: 20,
            reward_window: 5,
            convergence_tol: 1e-3,
            seed: 0,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(SearchError::InvalidConfig(format!(
                "beta must be positive, got {}",
                self.beta
            )));
        }
        if self.num_samples < 2 {
            return Err(SearchError::InvalidConfig(format!(
                "num_samples must be at least 2, got {}",
                self.num_samples
            )));
        }
        // max_iters = 0 is allowed: the loop body never runs and the
        // caller gets the initial policy back unchanged.
        if self.reward_window == 0 {
            return Err(SearchError::InvalidConfig("reward_window must be at least 1".into()));
        }
        if !(self.convergence_tol > 0.0) {
            return Err(SearchError::InvalidConfig(format!(
                "convergence_tol must be positive, got {}",
                self.convergence_tol
            )));
        }
        Ok(())
    }
}

/// Draw `n` candidates from the policy via the Cholesky factor of its
/// covariance. Deterministic for a given RNG state.
pub fn sample_policy(
    policy: &GaussianPolicy,
    n: usize,
    rng: &mut impl Rng,
) -> Result<Vec<DVector<f64>>, SearchError> {
    policy.validate()?;
    let chol = Cholesky::new(policy.covariance.clone()).ok_or(SearchError::NotPositiveDefinite)?;
    let l = chol.l();
    let d = policy.dim();
    Ok((0..n)
        .map(|_| {
            let noise = DVector::from_fn(d, |_, _| rng.sample(StandardNormal));
            &policy.mean + &l * noise
        })
        .collect())
}

/// Score a planned trajectory by its closeness to the gate around the
/// nominal traversal stage `j* = int(t_tra/dt)`: the negated sum of
/// per-axis position differences over the stages `[j*−w, j*+w−1]`,
/// clipped to the horizon. Zero is perfect; real trajectories are
/// negative.
pub fn trajectory_reward(
    solution: &MpcSolution,
    gate_trajectory: &[GateState],
    t_tra: f64,
    dt: f64,
    window: usize,
) -> f64 {
    let h_max = solution.states.len() - 1;
    // Clamping j* keeps the window nonempty for traversal times beyond
    // the horizon, which early policy samples do produce; they simply
    // score the mismatch at the closest end of the trajectory.
    let j_star = ((t_tra / dt) as i64).clamp(0, h_max as i64);
    let lo = (j_star - window as i64).max(0) as usize;
    let hi = ((j_star + window as i64 - 1).min(h_max as i64)) as usize;
    -(lo..=hi)
        .map(|j| {
            let offset = solution.states[j].position - gate_trajectory[j].position;
            offset.x.abs() + offset.y.abs() + offset.z.abs()
        })
        .sum::<f64>()
}

/// Soft-max weights over rewards: `d_i = exp(β·(R_i − max_j R_j))`.
/// Subtracting the best reward before exponentiating is a pure rescaling
/// of the weights (the update is scale-invariant) that prevents underflow
/// for strongly negative rewards. Non-finite rewards weigh zero.
pub fn reward_weights(rewards: &[f64], beta: f64) -> Vec<f64> {
    let best = rewards
        .iter()
        .copied()
        .filter(|r| r.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    if !best.is_finite() {
        return vec![0.0; rewards.len()];
    }
    rewards
        .iter()
        .map(|r| if r.is_finite() { (beta * (r - best)).exp() } else { 0.0 })
        .collect()
}

/// Result of one weighted refit of the policy.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyUpdate {
    pub policy: GaussianPolicy,
    /// Set when the weights collapsed onto effectively one sample, so the
    /// covariance could not be re-estimated and the previous one was
    /// shrunk by 0.9 instead.
    pub covariance_degenerate: bool,
}

/// Weighted maximum-likelihood refit: `μ' = Σ dᵢzᵢ / Σ dᵢ` and
/// `Σ' = Σ dᵢ(zᵢ−μ')(zᵢ−μ')ᵀ / Y` with the unbiased weighted normalizer
/// `Y = ((Σd)² − Σd²)/Σd`. The eigenvalue floor is applied afterwards.
pub fn update_policy(
    policy: &GaussianPolicy,
    samples: &[DVector<f64>],
    weights: &[f64],
) -> Result<PolicyUpdate, SearchError> {
    let d = policy.dim();
    if samples.is_empty() || samples.len() != weights.len() {
        return Err(SearchError::InvalidConfig(format!(
            "got {} samples and {} weights",
            samples.len(),
            weights.len()
        )));
    }
    if samples.iter().any(|z| z.len() != d) {
        return Err(SearchError::InvalidPolicy("sample dimension does not match the policy".into()));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(SearchError::InvalidConfig("weights must be finite and nonnegative".into()));
    }
    let weight_sum: f64 = weights.iter().sum();
    if !(weight_sum > 0.0) {
        return Err(SearchError::DegenerateWeights);
    }

    let mut mean = DVector::zeros(d);
    for (z, w) in samples.iter().zip(weights) {
        mean += z * *w;
    }
    mean /= weight_sum;

    let weight_sq: f64 = weights.iter().map(|w| w * w).sum();
    let normalizer = (weight_sum * weight_sum - weight_sq) / weight_sum;
    let (covariance, degenerate) = if normalizer > 0.0 {
        let mut cov = DMatrix::zeros(d, d);
        for (z, w) in samples.iter().zip(weights) {
            let e = z - &mean;
            cov += (&e * e.transpose()) * *w;
        }
        (cov / normalizer, false)
    } else {
        (policy.covariance.clone() * 0.9, true)
    };

    if degenerate {
        log::warn!("sample weights collapsed onto one candidate; shrinking the previous covariance");
    }
    Ok(PolicyUpdate {
        policy: GaussianPolicy::new(mean, covariance)?,
        covariance_degenerate: degenerate,
    })
}

/// One row of the search history: the mean sampled reward seen during an
/// iteration and the policy that iteration produced.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchRecord {
    pub iteration: usize,
    /// Mean reward over the iteration's successfully solved samples.
    pub mean_reward: f64,
    pub policy: GaussianPolicy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub policy: GaussianPolicy,
    pub history: Vec<SearchRecord>,
}

/// Run the full loop from `initial_policy` for one traversal problem:
/// sample candidates, solve one trajectory per candidate (in parallel),
/// reweight, refit, until the mean stops moving or the iteration budget
/// runs out.
///
/// Candidate solves that fail numerically score `-∞` and so drop out of
/// the refit with zero weight; structural errors (bad reference, invalid
/// state) abort the search. Sampling is serial and the per-candidate
/// solves are order-independent, so the outcome does not depend on the
/// number of worker threads.
pub fn search(
    initial_policy: &GaussianPolicy,
    solver: &MpcSolver,
    initial_state: &QuadState,
    reference: &MpcReference,
    config: &SearchConfig,
) -> Result<SearchOutcome, SearchError> {
    config.validate()?;
    initial_policy.validate()?;
    reference.validate(solver.config())?;
    initial_state.validate().map_err(MpcError::from)?;

    let mut policy = initial_policy.clone();
    let mut history = Vec::new();
    // One solve at the policy mean per iteration seeds every candidate
    // solve: only the traversal time differs between candidates, so the
    // mean's trajectory is a near-optimal guess for all of them.
    let mut base: Option<MpcSolution> = None;
    for iteration in 0..config.max_iters {
        let mut rng = seeded_rng(derive_seed(config.seed, iteration as u64));
        let samples = sample_policy(&policy, config.num_samples, &mut rng)?;
        base = mean_solution(&policy, solver, initial_state, reference, base.take());
        let rewards =
            evaluate_samples(&samples, solver, initial_state, reference, base.as_ref(), config)?;

        let finite: Vec<f64> = rewards.iter().copied().filter(|r| r.is_finite()).collect();
        if finite.is_empty() {
            return Err(SearchError::DegenerateWeights);
        }
        let mean_reward = finite.iter().sum::<f64>() / finite.len() as f64;

        let weights = reward_weights(&rewards, config.beta);
        let update = update_policy(&policy, &samples, &weights)?;
        let mean_shift = (&update.policy.mean - &policy.mean).amax();
        policy = update.policy;
        history.push(SearchRecord { iteration, mean_reward, policy: policy.clone() });

        if mean_shift < config.convergence_tol {
            break;
        }
    }
    Ok(SearchOutcome { policy, history })
}

/// Solve the trajectory for the current policy mean, reusing the previous
/// mean's solution as a guess when one exists. A failure here is not
/// fatal — the candidates fall back to cold starts — so errors only log.
fn mean_solution(
    policy: &GaussianPolicy,
    solver: &MpcSolver,
    initial_state: &QuadState,
    reference: &MpcReference,
    previous: Option<MpcSolution>,
) -> Option<MpcSolution> {
    let dv = DecisionVariables::new(policy.mean[0]).clamped(solver.config());
    let result = match &previous {
        Some(prev) => solver.solve_with_guess(initial_state, &dv, reference, prev),
        None => solver.solve(initial_state, &dv, reference, None),
    };
    match result {
        Ok(solution) => Some(solution),
        Err(e) => {
            log::debug!("mean solve failed ({e}); keeping the previous base");
            previous
        }
    }
}

/// Solve one trajectory per candidate and score it. Parallel over
/// candidates; the result vector is indexed like `samples`. All
/// candidates start from the same `base`, so the outcome is independent
/// of how the loop is scheduled.
fn evaluate_samples(
    samples: &[DVector<f64>],
    solver: &MpcSolver,
    initial_state: &QuadState,
    reference: &MpcReference,
    base: Option<&MpcSolution>,
    config: &SearchConfig,
) -> Result<Vec<f64>, SearchError> {
    let results: Vec<Result<f64, MpcError>> = samples
        .par_iter()
        .map(|z| {
            let dv = DecisionVariables::new(z[0]).clamped(solver.config());
            let solved = match base {
                Some(b) => solver.solve_with_guess(initial_state, &dv, reference, b),
                None => solver.solve(initial_state, &dv, reference, None),
            };
            match solved {
                Ok(solution) => Ok(trajectory_reward(
                    &solution,
                    &reference.gate_trajectory,
                    dv.t_tra,
                    solver.config().dt,
                    config.reward_window,
                )),
                Err(MpcError::NumericalFailure(reason)) => {
                    log::debug!("candidate solve failed numerically ({reason}); zero weight");
                    Ok(f64::NEG_INFINITY)
                }
                Err(e) => Err(e),
            }
        })
        .collect();
    results.into_iter().collect::<Result<Vec<_>, _>>().map_err(Into::into)
}

/// Render the history as CSV for plotting. `mu` and `sigma` are the mean
/// and standard deviation of the first policy dimension.
pub fn history_csv(history: &[SearchRecord]) -> String {
    let mut out = String::from("iteration,mean_reward,mu,sigma\n");
    for record in history {
        let mu = record.policy.mean[0];
        let sigma = record.policy.covariance[(0, 0)].sqrt();
        writeln!(out, "{},{},{},{}", record.iteration, record.mean_reward, mu, sigma)
            .expect("writing to a String cannot fail");
    }
    out
}
