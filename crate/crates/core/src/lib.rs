//! Decision-focused learning of missing MDP parameters.
//!
//! A predictive model maps per-entity features to MDP parameters θ. A soft
//! planner turns θ into a policy π*(θ), and the policy is scored by off-policy
//! evaluation on logged trajectories. Training can fit θ to the true parameters
//! directly (two-stage) or backpropagate the off-policy score through the
//! planner (decision-focused), differentiating the optimality conditions of a
//! policy-gradient or Bellman-error objective.
//!
//! ```
//! use dfmdp::env::{Env, UniformPolicy};
//! use dfmdp::mdp::{Domain, EnvSpec};
//!
//! let spec = EnvSpec::default_for(Domain::Gridworld);
//! let env = Env::from_spec(&spec);
//! let theta = env.generate_params(&mut dfmdp::seed::rng(0));
//! let trajs = env.simulate(&theta, &UniformPolicy(env.n_actions()), 4, 1, false).unwrap();
//! assert_eq!(trajs[0].len(), spec.horizon);
//! ```

pub mod autodiff;
pub mod diffmdp;
pub mod env;
pub mod harness;
pub mod error;
pub mod mdp;
pub mod nn;
pub mod ope;
pub mod seed;
pub mod solver;
pub mod training;

pub use error::Error;
