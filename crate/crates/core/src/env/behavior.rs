use super::{ActionPolicy, Env, EnvError, UniformPolicy};
use crate::mdp::{Domain, Regime, State};
use crate::solver::{solve, SoftPolicy, SolverSettings};

/// Temperatures of the near-optimal logging policies.
pub const NEAR_OPTIMAL_BETA: [(Domain, f64); 3] = [(Domain::Gridworld, 1.0), (Domain::Snare, 5.0), (Domain::Tb, 20.0)];

#[derive(Debug, Clone)]
pub enum BehaviorPolicy {
    Random(UniformPolicy),
    NearOptimal(SoftPolicy),
}

impl ActionPolicy for BehaviorPolicy {
    fn action_probs(&self, state: &State) -> Vec<f64> {
        match self {
            BehaviorPolicy::Random(u) => u.action_probs(state),
            BehaviorPolicy::NearOptimal(p) => p.action_probs(state),
        }
    }
}

pub fn near_optimal_settings(domain: Domain) -> SolverSettings {
    let beta = NEAR_OPTIMAL_BETA.iter().find(|(d, _)| *d == domain).unwrap().1;
    let iterations = match domain {
        Domain::Gridworld => 50000,
        Domain::Snare => 50000,
        Domain::Tb => 100000,
    };
    SolverSettings { beta, iterations, random_steps: 1000 }
}

/// Logging policy for `regime`; the near-optimal one is solved on the true θ*.
pub fn behavior_policy(
    regime: Regime,
    env: &Env,
    domain: Domain,
    true_params: Option<&[f64]>,
    seed: u64,
) -> Result<BehaviorPolicy, EnvError> {
    match regime {
        Regime::Random => Ok(BehaviorPolicy::Random(UniformPolicy(env.n_actions()))),
        Regime::NearOptimal => {
            let theta = true_params.ok_or(EnvError::MissingTrueParams)?;
            let settings = near_optimal_settings(domain);
            let r = solve(env, theta, &settings, seed, None).map_err(|e| EnvError::Solver(e.to_string()))?;
            Ok(BehaviorPolicy::NearOptimal(r.policy))
        }
    }
}
