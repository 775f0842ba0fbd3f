//! Decision-focused backward pass.
//!
//! The planner's output π* satisfies an optimality condition ∇_πJ(π*, θ) = 0.
//! Differentiating it gives
//!
//! dEval/dθ = −(dEval/dπ) (∇²_πJ)⁻¹ ∇²_{θπ}J,
//!
//! where J is either the expected return (policy-gradient mode) or the
//! expected squared trajectory Bellman error (Bellman mode). Both second
//! derivatives are estimated from first-order statistics of trajectories
//! sampled under (θ, π*); the Hessian is approximated by a constant (identity),
//! a low-rank sum plus a constant (Woodbury), or computed densely (full).

mod cross;
mod full;
mod lowrank;
mod stats;

pub use cross::cross_vjp;
pub use full::{dense_solve_transpose, full_hessian_oracle, DenseDerivatives, MAX_FULL_DIM};
pub use lowrank::{build_lowrank, identity_solve, woodbury_solve, LowRankHessian, SolveReport, CORE_RIDGE, MAX_CORE_CONDITION};
pub use stats::{bellman_gradient, bellman_stats, pg_gradient, pg_stats, BellmanTrajStats, PgTrajStats};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AutodiffError, Tensor};
use crate::env::{Env, EnvError};
use crate::mdp::{MdpError, PredictiveModel, Trajectory};
use crate::solver::SoftPolicy;

#[derive(Debug, Error)]
pub enum DiffError {
    #[error("no trajectories")]
    Empty,
    #[error("trajectory has no latent transition records")]
    MissingLatents,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("statistics were computed for the other optimality condition")]
    ModeMismatch,
    #[error("Hessian shift c must be nonzero")]
    ZeroShift,
    #[error("linear system is singular")]
    Singular,
    #[error("policy dimension {n} exceeds the dense limit {max}")]
    TooLarge { n: usize, max: usize },
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Mdp(#[from] MdpError),
}

/// Which optimality condition is differentiated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Pg,
    Bellman,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Identity,
    Woodbury,
    Full,
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "pg" => Ok(Mode::Pg),
            "bellman" => Ok(Mode::Bellman),
            _ => Err(format!("unknown mode {s:?}")),
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "identity" => Ok(Strategy::Identity),
            "woodbury" => Ok(Strategy::Woodbury),
            "full" => Ok(Strategy::Full),
            _ => Err(format!("unknown Hessian strategy {s:?}")),
        }
    }
}

/// Terms kept in the Bellman cross derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossVariant {
    /// (y·∇_πδ) ∇_θδ
    Leading,
    /// adds δ(y·∇_πδ)∇_θ log p + δ(y·∇_π log p)∇_θδ
    WithDelta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackwardConfig {
    pub mode: Mode,
    pub strategy: Strategy,
    /// |c|; the sign follows the mode.
    pub c: f64,
    pub cross: CrossVariant,
    /// Trajectories sampled per backward pass.
    pub k: usize,
    /// Central-difference step of the full strategy.
    pub fd_step: f64,
}

impl BackwardConfig {
    pub fn new(mode: Mode, strategy: Strategy) -> Self {
        BackwardConfig { mode, strategy, c: 1.0, cross: CrossVariant::Leading, k: 100, fd_step: 1e-5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TrajStats {
    Pg(PgTrajStats),
    Bellman(BellmanTrajStats),
}

impl TrajStats {
    fn policy_dim(&self) -> usize {
        match self {
            TrajStats::Pg(p) => p.g_phi.len(),
            TrajStats::Bellman(b) => b.g_delta_pi.len(),
        }
    }
}

/// Statistics of a weighted trajectory set (weights 1/k for samples,
/// p(τ) for an enumeration).
#[derive(Debug, Clone, PartialEq)]
pub struct StatsBatch {
    pub stats: Vec<TrajStats>,
    pub weights: Vec<f64>,
    pub trajectories: Vec<Trajectory>,
    pub gamma: f64,
}

impl StatsBatch {
    pub fn policy_dim(&self) -> usize {
        self.stats.first().map_or(0, TrajStats::policy_dim)
    }

    pub fn len(&self) -> usize {
        self.stats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stats.is_empty()
    }
}

#[allow(clippy::too_many_arguments)]
pub fn collect_stats(
    trajectories: Vec<Trajectory>,
    weights: Option<Vec<f64>>,
    theta: &[f64],
    policy: &SoftPolicy,
    gamma: f64,
    mode: Mode,
    latents_required: bool,
) -> Result<StatsBatch, DiffError> {
    if trajectories.is_empty() {
        return Err(DiffError::Empty);
    }
    let k = trajectories.len();
    let weights = weights.unwrap_or_else(|| vec![1.0 / k as f64; k]);
    if weights.len() != k {
        return Err(DiffError::Dimension(format!("{} weights for {k} trajectories", weights.len())));
    }
    let stats = trajectories
        .par_iter()
        .map(|t| match mode {
            Mode::Pg => pg_stats(t, theta, policy, gamma, latents_required).map(TrajStats::Pg),
            Mode::Bellman => bellman_stats(t, theta, policy, gamma, latents_required).map(TrajStats::Bellman),
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(StatsBatch { stats, weights, trajectories, gamma })
}

/// Simulates `k` fresh trajectories under (θ, π) and collects their statistics.
pub fn sample_stats(env: &Env, theta: &[f64], policy: &SoftPolicy, k: usize, seed: u64, mode: Mode) -> Result<StatsBatch, DiffError> {
    let trajs = env.simulate(theta, policy, k, seed, true)?;
    let latents_required = !matches!(env, Env::Gridworld(_));
    collect_stats(trajs, None, theta, policy, env.gamma(), mode, latents_required)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackwardReport {
    /// dEval/dθ
    pub g_theta: Vec<f64>,
    /// H⁻ᵀ dEval/dπ
    pub y: Vec<f64>,
    pub condition: Option<f64>,
    /// Woodbury core ridged, or dense solve fell back to the pseudo-inverse.
    pub ridged: bool,
}

/// dEval/dθ = −cross_vjp(H⁻ᵀ g_π).
pub fn theta_gradient(
    g_pi: &[f64],
    batch: &StatsBatch,
    theta: &[f64],
    policy: &SoftPolicy,
    cfg: &BackwardConfig,
) -> Result<BackwardReport, DiffError> {
    if batch.is_empty() {
        return Err(DiffError::Empty);
    }
    let n = batch.policy_dim();
    if g_pi.len() != n {
        return Err(DiffError::Dimension(format!("dEval/dπ has length {} but the policy has {n}", g_pi.len())));
    }
    let d = theta.len();
    let (y, condition, ridged, g_theta) = match cfg.strategy {
        Strategy::Identity => {
            let y = identity_solve(cfg.mode, cfg.c, g_pi)?;
            let g = cross_vjp(batch, &y, d, cfg.cross)?;
            (y, None, false, g)
        }
        Strategy::Woodbury => {
            let h = build_lowrank(batch, cfg.mode, cfg.c)?;
            let r = woodbury_solve(&h.transpose(), g_pi)?;
            let g = cross_vjp(batch, &r.y, d, cfg.cross)?;
            (r.y, Some(r.condition), r.ridged, g)
        }
        Strategy::Full => {
            let dense = full_hessian_oracle(&batch.trajectories, &batch.weights, theta, policy, cfg.mode, batch.gamma, cfg.fd_step)?;
            let (y, pinv) = dense_solve_transpose(&dense.hessian, g_pi)?;
            let g = dense.cross.transpose() * nalgebra::DVector::from_column_slice(&y);
            (y, None, pinv, g.as_slice().to_vec())
        }
    };
    Ok(BackwardReport { g_theta: g_theta.into_iter().map(|v| -v).collect(), y, condition, ridged })
}

/// Δw_eval = (dEval/dθ)ᵀ ∂θ/∂w, never forming ∂θ/∂w.
#[allow(clippy::too_many_arguments)]
pub fn assemble_dw(
    g_pi: &[f64],
    batch: &StatsBatch,
    theta: &[f64],
    policy: &SoftPolicy,
    cfg: &BackwardConfig,
    model: &PredictiveModel,
    features: &Tensor,
) -> Result<(Vec<f64>, BackwardReport), DiffError> {
    let report = theta_gradient(g_pi, batch, theta, policy, cfg)?;
    let dw = model.vjp(features, &report.g_theta)?;
    Ok((dw, report))
}
