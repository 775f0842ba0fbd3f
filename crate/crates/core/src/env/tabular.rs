use rand::Rng;
use rand_distr::StandardNormal;

use super::{ActionPolicy, EnvError, Simulator, Transition};
use crate::mdp::{LatentEvent, State, Step, Trajectory};

/// Probability of one successor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outcome {
    Known(f64),
    /// θ[i]
    Theta(usize),
    /// 1 − θ[i]
    ThetaComplement(usize),
}

impl Outcome {
    pub fn prob(self, theta: &[f64]) -> f64 {
        match self {
            Outcome::Known(p) => p,
            Outcome::Theta(i) => theta[i],
            Outcome::ThetaComplement(i) => 1.0 - theta[i],
        }
    }

    fn event(self, entity: usize) -> Option<LatentEvent> {
        match self {
            Outcome::Known(p) if p >= 1.0 => None,
            Outcome::Known(prob) => Some(LatentEvent::Fixed { entity, prob }),
            Outcome::Theta(param) => Some(LatentEvent::Bernoulli { entity, param, outcome: true }),
            Outcome::ThetaComplement(param) => Some(LatentEvent::Bernoulli { entity, param, outcome: false }),
        }
    }
}

/// Finite MDP whose rewards and transition probabilities may be entries of θ.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    pub n_states: usize,
    pub n_actions: usize,
    pub start: usize,
    pub horizon: usize,
    pub gamma: f64,
    /// θ index of R(s, a), at `s * n_actions + a`.
    pub reward_param: Vec<usize>,
    /// Successors of (s, a), at `s * n_actions + a`.
    pub transitions: Vec<Vec<(usize, Outcome)>>,
    pub reward_noise: f64,
}

impl TabularMdp {
    /// Two states, two actions, horizon 2; θ = 4 rewards R(s,a) then
    /// 4 probabilities P(s′ = 1 | s, a).
    pub fn tiny() -> Self {
        let mut transitions = Vec::new();
        for sa in 0..4 {
            transitions.push(vec![(1, Outcome::Theta(4 + sa)), (0, Outcome::ThetaComplement(4 + sa))]);
        }
        TabularMdp {
            n_states: 2,
            n_actions: 2,
            start: 0,
            horizon: 2,
            gamma: 0.95,
            reward_param: (0..4).collect(),
            transitions,
            reward_noise: 0.0,
        }
    }

    pub fn idx(&self, s: usize, a: usize) -> usize {
        s * self.n_actions + a
    }

    pub fn reward(&self, theta: &[f64], s: usize, a: usize) -> f64 {
        theta[self.reward_param[self.idx(s, a)]]
    }

    pub fn successors(&self, s: usize, a: usize) -> &[(usize, Outcome)] {
        &self.transitions[self.idx(s, a)]
    }

    /// Dense P(s′ | s, a) under θ.
    pub fn transition_probs(&self, theta: &[f64], s: usize, a: usize) -> Vec<(usize, f64)> {
        self.successors(s, a).iter().map(|&(sp, o)| (sp, o.prob(theta))).collect()
    }

    pub fn enumeration_size(&self) -> u128 {
        let branch = self.transitions.iter().map(|t| t.len()).max().unwrap_or(1) as u128;
        (self.n_actions as u128 * branch).saturating_pow(self.horizon as u32)
    }

    /// Every trajectory with positive probability, paired with p(τ | θ, π).
    pub fn enumerate(
        &self,
        theta: &[f64],
        policy: &dyn ActionPolicy,
        limit: u128,
    ) -> Result<Vec<(Trajectory, f64)>, EnvError> {
        let size = self.enumeration_size();
        if size > limit {
            return Err(EnvError::TooManyTrajectories(size));
        }
        let mut out = Vec::new();
        let mut prefix = Vec::with_capacity(self.horizon);
        self.enumerate_from(theta, policy, self.start, 1.0, &mut prefix, &mut out);
        Ok(out)
    }

    fn enumerate_from(
        &self,
        theta: &[f64],
        policy: &dyn ActionPolicy,
        s: usize,
        prob: f64,
        prefix: &mut Vec<Step>,
        out: &mut Vec<(Trajectory, f64)>,
    ) {
        if prefix.len() == self.horizon {
            out.push((Trajectory { steps: prefix.clone(), final_state: State::Discrete(s) }, prob));
            return;
        }
        let state = State::Discrete(s);
        let pi = policy.action_probs(&state);
        for a in 0..self.n_actions {
            if pi[a] <= 0.0 {
                continue;
            }
            for &(sp, o) in self.successors(s, a) {
                let p = o.prob(theta);
                if p <= 0.0 {
                    continue;
                }
                prefix.push(Step {
                    state: state.clone(),
                    action: a,
                    reward: self.reward(theta, s, a),
                    behavior_prob: pi[a],
                    latents: o.event(s).into_iter().collect(),
                    reward_param: Some(self.reward_param[self.idx(s, a)]),
                });
                self.enumerate_from(theta, policy, sp, prob * pi[a] * p, prefix, out);
                prefix.pop();
            }
        }
    }

    /// Exact E[Σ_{t=1..h} γ^t R_t] by backward induction over the finite horizon.
    pub fn expected_return(&self, theta: &[f64], policy: &dyn ActionPolicy) -> f64 {
        // v[s] = value of the remaining steps, discount measured from the current step
        let mut v = vec![0.0; self.n_states];
        for _ in 0..self.horizon {
            let mut nv = vec![0.0; self.n_states];
            for (s, nvs) in nv.iter_mut().enumerate() {
                let pi = policy.action_probs(&State::Discrete(s));
                for a in 0..self.n_actions {
                    let cont: f64 = self.transition_probs(theta, s, a).iter().map(|&(sp, p)| p * v[sp]).sum();
                    *nvs += pi[a] * self.gamma * (self.reward(theta, s, a) + cont);
                }
            }
            v = nv;
        }
        v[self.start]
    }
}

impl Simulator for TabularMdp {
    type Hidden = ();

    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn gamma(&self) -> f64 {
        self.gamma
    }

    fn reset<R: Rng + ?Sized>(&self, _: &[f64], _: &mut R) -> ((), State, Vec<LatentEvent>) {
        ((), State::Discrete(self.start), Vec::new())
    }

    fn step<R: Rng + ?Sized>(
        &self,
        theta: &[f64],
        _: &mut (),
        state: &State,
        action: usize,
        rng: &mut R,
    ) -> Result<Transition, EnvError> {
        if action >= self.n_actions {
            return Err(EnvError::ActionOutOfRange { action, n: self.n_actions });
        }
        let s = state.discrete();
        let succ = self.successors(s, action);
        let (next, outcome) = if succ.len() == 1 {
            succ[0]
        } else {
            let probs: Vec<f64> = succ.iter().map(|(_, o)| o.prob(theta)).collect();
            succ[super::sample_index(&probs, rng)]
        };
        let mut reward = self.reward(theta, s, action);
        if self.reward_noise > 0.0 {
            let e: f64 = rng.sample(StandardNormal);
            reward += self.reward_noise * e;
        }
        Ok(Transition {
            reward,
            next_state: State::Discrete(next),
            latents: outcome.event(s).into_iter().collect(),
            reward_param: Some(self.reward_param[self.idx(s, action)]),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::UniformPolicy;

    fn theta() -> Vec<f64> {
        vec![1.0, -0.5, 0.3, 2.0, 0.2, 0.7, 0.4, 0.9]
    }

    #[test]
    fn enumeration_probabilities_sum_to_one() {
        let mdp = TabularMdp::tiny();
        let all = mdp.enumerate(&theta(), &UniformPolicy(2), 1000).unwrap();
        assert_eq!(all.len(), 16);
        let total: f64 = all.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn enumerated_return_matches_backward_induction() {
        let mdp = TabularMdp::tiny();
        let th = theta();
        let all = mdp.enumerate(&th, &UniformPolicy(2), 1000).unwrap();
        let j: f64 = all.iter().map(|(t, p)| p * t.discounted_return(mdp.gamma)).sum();
        assert!((j - mdp.expected_return(&th, &UniformPolicy(2))).abs() < 1e-12);
    }

    #[test]
    fn latent_log_prob_matches_transition_probabilities() {
        let mdp = TabularMdp::tiny();
        let th = theta();
        for (t, p) in mdp.enumerate(&th, &UniformPolicy(2), 1000).unwrap() {
            let policy_part: f64 = t.steps.iter().map(|s| s.behavior_prob.ln()).sum();
            assert!((policy_part + t.latent_log_prob(&th) - p.ln()).abs() < 1e-12);
        }
    }
}
