//! Benchmark dynamics: gridworld, snare finding and TB adherence, plus small
//! tabular MDPs used as exact oracles.

mod behavior;
mod gridworld;
mod snare;
mod tabular;
mod tb;

pub use behavior::{behavior_policy, near_optimal_settings, BehaviorPolicy, NEAR_OPTIMAL_BETA};
pub use gridworld::{Gridworld, EAST, NORTH, SOUTH, STAY, WEST};
pub use snare::{belief_step_snare, Snare, REMOVAL_SUCCESS};
pub use tabular::{Outcome, TabularMdp};
pub use tb::{belief_step_tb, tb_index, Tb};

use rand::Rng;
use thiserror::Error;

use crate::mdp::{Domain, EnvSpec, FeatureGenerator, LatentEvent, MdpError, MdpInstance, State, Step, Trajectory};
use crate::seed;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("action {action} out of range (0..{n})")]
    ActionOutOfRange { action: usize, n: usize },
    #[error("policy gave probability 0 to the chosen action {action} at step {step}")]
    ZeroProbability { action: usize, step: usize },
    #[error("invalid policy distribution at step {step}: {detail}")]
    BadDistribution { step: usize, detail: String },
    #[error("near-optimal behavior needs the true parameters")]
    MissingTrueParams,
    #[error("enumeration would produce {0} trajectories")]
    TooManyTrajectories(u128),
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error("solver: {0}")]
    Solver(String),
}

/// Anything that assigns a distribution over actions to a state.
pub trait ActionPolicy: Sync {
    fn action_probs(&self, state: &State) -> Vec<f64>;
}

/// Uniform over `n` actions.
#[derive(Debug, Clone, Copy)]
pub struct UniformPolicy(pub usize);

impl ActionPolicy for UniformPolicy {
    fn action_probs(&self, _: &State) -> Vec<f64> {
        vec![1.0 / self.0 as f64; self.0]
    }
}

/// Result of one environment step.
#[derive(Debug, Clone)]
pub struct Transition {
    pub reward: f64,
    pub next_state: State,
    pub latents: Vec<LatentEvent>,
    pub reward_param: Option<usize>,
}

/// Step-level dynamics under a parameter vector θ.
pub trait Simulator: Sync {
    type Hidden: Clone;

    fn n_actions(&self) -> usize;
    fn horizon(&self) -> usize;
    fn gamma(&self) -> f64;

    /// Initial hidden state, observed state and any events drawn at reset.
    fn reset<R: Rng + ?Sized>(&self, theta: &[f64], rng: &mut R) -> (Self::Hidden, State, Vec<LatentEvent>);

    fn step<R: Rng + ?Sized>(
        &self,
        theta: &[f64],
        hidden: &mut Self::Hidden,
        state: &State,
        action: usize,
        rng: &mut R,
    ) -> Result<Transition, EnvError>;
}

/// Samples an index from `probs`.
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding left a sliver above the last cumulative sum
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

/// One full-horizon episode.
pub fn rollout<S: Simulator, R: Rng + ?Sized>(
    sim: &S,
    theta: &[f64],
    policy: &dyn ActionPolicy,
    rng: &mut R,
) -> Result<Trajectory, EnvError> {
    let (mut hidden, mut state, mut pending) = sim.reset(theta, rng);
    let mut steps = Vec::with_capacity(sim.horizon());
    for t in 0..sim.horizon() {
        let probs = policy.action_probs(&state);
        if probs.len() != sim.n_actions() {
            return Err(EnvError::BadDistribution {
                step: t,
                detail: format!("{} probabilities for {} actions", probs.len(), sim.n_actions()),
            });
        }
        let total: f64 = probs.iter().sum();
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) || (total - 1.0).abs() > 1e-6 {
            return Err(EnvError::BadDistribution { step: t, detail: format!("sums to {total}") });
        }
        let action = sample_index(&probs, rng);
        if probs[action] <= 0.0 {
            return Err(EnvError::ZeroProbability { action, step: t });
        }
        let tr = sim.step(theta, &mut hidden, &state, action, rng)?;
        let mut latents = std::mem::take(&mut pending);
        latents.extend(tr.latents);
        steps.push(Step {
            state,
            action,
            reward: tr.reward,
            behavior_prob: probs[action],
            latents,
            reward_param: tr.reward_param,
        });
        state = tr.next_state;
    }
    Ok(Trajectory { steps, final_state: state })
}

/// `k` episodes, trajectory `i` drawn from its own stream derived from `seed`.
pub fn simulate<S: Simulator>(
    sim: &S,
    theta: &[f64],
    policy: &dyn ActionPolicy,
    k: usize,
    seed: u64,
    record_latents: bool,
) -> Result<Vec<Trajectory>, EnvError> {
    (0..k)
        .map(|i| {
            let mut rng = seed::child_rng(seed, "trajectory", i as u64);
            let mut t = rollout(sim, theta, policy, &mut rng)?;
            if !record_latents {
                for s in &mut t.steps {
                    s.latents.clear();
                }
            }
            Ok(t)
        })
        .collect()
}

/// A concrete benchmark environment.
#[derive(Debug, Clone)]
pub enum Env {
    Gridworld(Gridworld),
    Snare(Snare),
    Tb(Tb),
}

impl Env {
    pub fn from_spec(spec: &EnvSpec) -> Self {
        match spec.domain {
            Domain::Gridworld => Env::Gridworld(Gridworld::from_spec(spec)),
            Domain::Snare => Env::Snare(Snare::from_spec(spec)),
            Domain::Tb => Env::Tb(Tb::from_spec(spec)),
        }
    }

    pub fn n_actions(&self) -> usize {
        match self {
            Env::Gridworld(g) => g.mdp().n_actions,
            Env::Snare(s) => s.n_actions(),
            Env::Tb(t) => t.n_actions(),
        }
    }

    /// Length of the state encoding fed to a Q-network.
    pub fn state_dim(&self) -> usize {
        match self {
            Env::Gridworld(g) => g.mdp().n_states,
            Env::Snare(s) => s.n_sites,
            Env::Tb(t) => t.n_patients,
        }
    }

    pub fn horizon(&self) -> usize {
        match self {
            Env::Gridworld(g) => g.mdp().horizon,
            Env::Snare(s) => s.horizon,
            Env::Tb(t) => t.horizon,
        }
    }

    pub fn gamma(&self) -> f64 {
        match self {
            Env::Gridworld(g) => g.mdp().gamma,
            Env::Snare(s) => s.gamma,
            Env::Tb(t) => t.gamma,
        }
    }

    pub fn generate_params<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            Env::Gridworld(g) => g.generate_params(rng),
            Env::Snare(s) => s.generate_params(rng),
            Env::Tb(t) => t.generate_params(rng),
        }
    }

    pub fn simulate(
        &self,
        theta: &[f64],
        policy: &dyn ActionPolicy,
        k: usize,
        seed: u64,
        record_latents: bool,
    ) -> Result<Vec<Trajectory>, EnvError> {
        match self {
            Env::Gridworld(g) => simulate(g.mdp(), theta, policy, k, seed, record_latents),
            Env::Snare(s) => simulate(s, theta, policy, k, seed, record_latents),
            Env::Tb(t) => simulate(t, theta, policy, k, seed, record_latents),
        }
    }
}

/// Draws θ* and features for one instance.
pub fn generate_instance(spec: &EnvSpec, generator: &FeatureGenerator, seed: u64) -> Result<MdpInstance, EnvError> {
    let env = Env::from_spec(spec);
    let theta = env.generate_params(&mut seed::child_rng(seed, "params", 0));
    let features = generator.generate(&theta, &mut seed::child_rng(seed, "features", 0))?;
    let inst = MdpInstance { spec: spec.clone(), seed, true_params: theta, features };
    inst.validate()?;
    Ok(inst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_instance() {
        for domain in [Domain::Gridworld, Domain::Snare, Domain::Tb] {
            let spec = EnvSpec::default_for(domain);
            let g = FeatureGenerator::new(domain, 5);
            let a = generate_instance(&spec, &g, 17).unwrap();
            let b = generate_instance(&spec, &g, 17).unwrap();
            assert_eq!(a, b);
            assert_ne!(a, generate_instance(&spec, &g, 18).unwrap());
        }
    }

    #[test]
    fn sample_index_respects_zero_mass() {
        let mut rng = seed::rng(1);
        for _ in 0..1000 {
            let i = sample_index(&[0.0, 0.3, 0.0, 0.7, 0.0], &mut rng);
            assert!(i == 1 || i == 3);
        }
    }
}
