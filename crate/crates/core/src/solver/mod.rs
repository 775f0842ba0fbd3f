//! Forward solvers producing soft policies π(a|s) = softmax(β · Q(s, ·)).

mod ddqn;
mod policy;
mod value_iteration;

pub use ddqn::{soft_ddqn, DdqnConfig, ReplayBuffer};
pub use policy::{QFunction, SoftPolicy, SolveResult};
pub use value_iteration::{soft_value_iteration, Backup, ViConfig};

use thiserror::Error;

use crate::autodiff::AutodiffError;
use crate::env::{Env, EnvError};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("non-finite value at step {step}: {detail}")]
    NonFinite { step: usize, detail: String },
    #[error("solver configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

/// Forward temperatures used during training and evaluation.
pub const FORWARD_BETA_GRIDWORLD: f64 = 0.1;
pub const FORWARD_BETA_SNARE: f64 = 1.0;
pub const FORWARD_BETA_TB: f64 = 5.0;

/// Budget for one forward solve of any domain.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SolverSettings {
    pub beta: f64,
    /// Value-iteration sweeps (tabular) or DDQN training steps.
    pub iterations: usize,
    pub random_steps: usize,
}

impl SolverSettings {
    pub fn forward(domain: crate::mdp::Domain) -> Self {
        use crate::mdp::Domain::*;
        let beta = match domain {
            Gridworld => FORWARD_BETA_GRIDWORLD,
            Snare => FORWARD_BETA_SNARE,
            Tb => FORWARD_BETA_TB,
        };
        SolverSettings { beta, iterations: 10000, random_steps: 1000 }
    }
}

/// Solves `env` under `theta`; the shared entry point of every trainer.
pub fn solve(
    env: &Env,
    theta: &[f64],
    settings: &SolverSettings,
    seed: u64,
    warm: Option<&SolveResult>,
) -> Result<SolveResult, SolverError> {
    match env {
        Env::Gridworld(g) => {
            let cfg = ViConfig { tol: 1e-12, ..ViConfig::new(settings.beta, settings.iterations) };
            soft_value_iteration(g.mdp(), theta, &cfg)
        }
        Env::Snare(_) | Env::Tb(_) => {
            let cfg = DdqnConfig {
                gamma: env.gamma(),
                random_steps: settings.random_steps,
                train_steps: settings.iterations,
                ..DdqnConfig::new(settings.beta)
            };
            let warm_net = warm.and_then(|w| match &w.policy.q {
                QFunction::Network { net } => Some(net),
                QFunction::Table { .. } => None,
            });
            match env {
                Env::Snare(s) => soft_ddqn(s, theta, &cfg, seed, warm_net),
                Env::Tb(t) => soft_ddqn(t, theta, &cfg, seed, warm_net),
                Env::Gridworld(_) => unreachable!(),
            }
        }
    }
}
