//! Problem instances, trajectories, features, the predictive model and
//! persistence.

mod checkpoint;
mod dataset;
mod features;
mod model;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use dataset::{load_dataset, save_dataset, Dataset, Entry, Regime, Split, DATASET_VERSION};
pub use features::{standardize_columns, FeatureGenerator, FEATURE_DIM};
pub use model::{Head, PredictiveModel};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::Tensor;

#[derive(Debug, Error)]
pub enum MdpError {
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("feature generation: {0}")]
    Features(String),
    #[error("predictive model: {0}")]
    Model(String),
    #[error("unsupported dataset version `{found}` (expected `{expected}`)")]
    Version { found: String, expected: &'static str },
    #[error("file is truncated: {0}")]
    Truncated(String),
    #[error("malformed file: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Autodiff(#[from] crate::autodiff::AutodiffError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Gridworld,
    Snare,
    Tb,
}

impl Domain {
    pub fn name(self) -> &'static str {
        match self {
            Domain::Gridworld => "gridworld",
            Domain::Snare => "snare",
            Domain::Tb => "tb",
        }
    }

    /// Predicted parameters per entity (cell, site or patient).
    pub fn params_per_entity(self) -> usize {
        match self {
            Domain::Tb => 8,
            _ => 1,
        }
    }
}

impl std::fmt::Display for Domain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Domain {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gridworld" => Ok(Domain::Gridworld),
            "snare" => Ok(Domain::Snare),
            "tb" => Ok(Domain::Tb),
            other => Err(format!("unknown domain `{other}`")),
        }
    }
}

/// Known structure of an instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub domain: Domain,
    /// Grid side, number of sites or number of patients.
    pub size: usize,
    pub horizon: usize,
    pub gamma: f64,
    /// Std of per-step reward noise (gridworld only).
    #[serde(default)]
    pub reward_noise: f64,
}

impl EnvSpec {
    pub fn default_for(domain: Domain) -> Self {
        let (size, horizon) = match domain {
            Domain::Gridworld => (5, 20),
            Domain::Snare => (20, 20),
            Domain::Tb => (5, 30),
        };
        EnvSpec { domain, size, horizon, gamma: 0.95, reward_noise: 0.0 }
    }

    pub fn n_entities(&self) -> usize {
        match self.domain {
            Domain::Gridworld => self.size * self.size,
            _ => self.size,
        }
    }

    pub fn n_params(&self) -> usize {
        self.n_entities() * self.domain.params_per_entity()
    }

    pub fn n_actions(&self) -> usize {
        match self.domain {
            Domain::Gridworld => 5,
            _ => self.size,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum State {
    Discrete(usize),
    Belief(Vec<f64>),
}

impl State {
    pub fn discrete(&self) -> usize {
        match self {
            State::Discrete(s) => *s,
            State::Belief(_) => panic!("expected a discrete state"),
        }
    }

    pub fn belief(&self) -> &[f64] {
        match self {
            State::Belief(b) => b,
            State::Discrete(_) => panic!("expected a belief state"),
        }
    }
}

/// One random transition event whose probability may depend on θ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LatentEvent {
    /// Probability θ[param] if `outcome`, else 1 − θ[param].
    Bernoulli { entity: usize, param: usize, outcome: bool },
    /// Probability θ[param].
    Categorical { entity: usize, param: usize },
    /// Known probability, independent of θ.
    Fixed { entity: usize, prob: f64 },
}

impl LatentEvent {
    pub fn prob(&self, theta: &[f64]) -> f64 {
        match *self {
            LatentEvent::Bernoulli { param, outcome, .. } => {
                if outcome {
                    theta[param]
                } else {
                    1.0 - theta[param]
                }
            }
            LatentEvent::Categorical { param, .. } => theta[param],
            LatentEvent::Fixed { prob, .. } => prob,
        }
    }

    pub fn param(&self) -> Option<usize> {
        match *self {
            LatentEvent::Bernoulli { param, .. } | LatentEvent::Categorical { param, .. } => Some(param),
            LatentEvent::Fixed { .. } => None,
        }
    }

    /// ∂ log prob / ∂ θ[param].
    pub fn dlog(&self, theta: &[f64]) -> Option<(usize, f64)> {
        match *self {
            LatentEvent::Bernoulli { param, outcome, .. } => {
                let p = theta[param];
                Some((param, if outcome { 1.0 / p } else { -1.0 / (1.0 - p) }))
            }
            LatentEvent::Categorical { param, .. } => Some((param, 1.0 / theta[param])),
            LatentEvent::Fixed { .. } => None,
        }
    }
}

/// One decision step. `latents` are the transition events that followed the
/// action (for the first step they also include events drawn at reset).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub state: State,
    pub action: usize,
    pub reward: f64,
    pub behavior_prob: f64,
    #[serde(default)]
    pub latents: Vec<LatentEvent>,
    /// Index of θ that is this step's expected reward, when rewards are parameters.
    #[serde(default)]
    pub reward_param: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<Step>,
    /// State reached after the last step.
    pub final_state: State,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn latents(&self) -> impl Iterator<Item = &LatentEvent> {
        self.steps.iter().flat_map(|s| s.latents.iter())
    }

    /// Σ log P(event) over all recorded transition events.
    pub fn latent_log_prob(&self, theta: &[f64]) -> f64 {
        self.latents().map(|e| e.prob(theta).ln()).sum()
    }

    /// ∇_θ of [`Self::latent_log_prob`], dense over `d` parameters.
    pub fn latent_log_prob_grad(&self, theta: &[f64], d: usize) -> Vec<f64> {
        let mut g = vec![0.0; d];
        for e in self.latents() {
            if let Some((i, v)) = e.dlog(theta) {
                g[i] += v;
            }
        }
        g
    }

    /// Σ_t γ^t r_t with t starting at 1.
    pub fn discounted_return(&self, gamma: f64) -> f64 {
        let mut disc = 1.0;
        let mut total = 0.0;
        for s in &self.steps {
            disc *= gamma;
            total += disc * s.reward;
        }
        total
    }
}

/// One benchmark problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpInstance {
    pub spec: EnvSpec,
    pub seed: u64,
    pub true_params: Vec<f64>,
    /// One row of `FEATURE_DIM` features per entity.
    pub features: Tensor,
}

impl MdpInstance {
    pub fn domain(&self) -> Domain {
        self.spec.domain
    }

    pub fn validate(&self) -> Result<(), MdpError> {
        validate_params(&self.spec, &self.true_params)?;
        if self.features.rows != self.spec.n_entities() || self.features.cols != FEATURE_DIM {
            return Err(MdpError::Invariant(format!(
                "feature matrix is {:?}, expected ({}, {FEATURE_DIM})",
                self.features.shape(),
                self.spec.n_entities()
            )));
        }
        if self.features.data.iter().any(|v| !v.is_finite()) {
            return Err(MdpError::Invariant("non-finite feature".into()));
        }
        Ok(())
    }
}

/// Domain-level validity of a parameter vector.
pub fn validate_params(spec: &EnvSpec, theta: &[f64]) -> Result<(), MdpError> {
    if theta.len() != spec.n_params() {
        return Err(MdpError::Invariant(format!("expected {} parameters, got {}", spec.n_params(), theta.len())));
    }
    if let Some(i) = theta.iter().position(|v| !v.is_finite()) {
        return Err(MdpError::Invariant(format!("parameter {i} is not finite")));
    }
    match spec.domain {
        Domain::Gridworld => {}
        Domain::Snare => {
            if let Some(i) = theta.iter().position(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(MdpError::Invariant(format!("arrival probability {i} = {} outside [0, 1]", theta[i])));
            }
        }
        Domain::Tb => {
            if let Some(i) = theta.iter().position(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(MdpError::Invariant(format!("transition probability {i} = {} outside [0, 1]", theta[i])));
            }
            for pair in theta.chunks(2) {
                if (pair[0] + pair[1] - 1.0).abs() > 1e-9 {
                    return Err(MdpError::Invariant(format!("transition row {pair:?} does not sum to 1")));
                }
            }
        }
    }
    Ok(())
}

pub(crate) fn validate_trajectory(spec: &EnvSpec, t: &Trajectory) -> Result<(), MdpError> {
    if t.steps.len() != spec.horizon {
        return Err(MdpError::Invariant(format!("trajectory length {} != horizon {}", t.steps.len(), spec.horizon)));
    }
    for (i, s) in t.steps.iter().enumerate() {
        if !(s.behavior_prob > 0.0 && s.behavior_prob <= 1.0) {
            return Err(MdpError::Invariant(format!("behavior_prob {} at step {i}", s.behavior_prob)));
        }
        if s.action >= spec.n_actions() {
            return Err(MdpError::Invariant(format!("action {} out of range at step {i}", s.action)));
        }
        for e in &s.latents {
            if let Some(p) = e.param() {
                if p >= spec.n_params() {
                    return Err(MdpError::Invariant(format!("latent event references parameter {p}")));
                }
            }
            if let LatentEvent::Fixed { prob, .. } = e {
                if !(0.0..=1.0).contains(prob) {
                    return Err(MdpError::Invariant(format!("fixed event probability {prob}")));
                }
            }
        }
    }
    Ok(())
}
