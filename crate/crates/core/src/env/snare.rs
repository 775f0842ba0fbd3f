use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{EnvError, Simulator, Transition};
use crate::mdp::{EnvSpec, LatentEvent, State};

pub const REMOVAL_SUCCESS: f64 = 0.9;

/// Ranger visiting one of `n_sites` per step; θ are per-site arrival probabilities.
///
/// Before the first decision every site gets one round of arrivals, so the
/// initial belief is p itself.
#[derive(Debug, Clone, PartialEq)]
pub struct Snare {
    pub n_sites: usize,
    pub horizon: usize,
    pub gamma: f64,
    pub high_risk_fraction: f64,
    pub clip: (f64, f64),
}

impl Snare {
    pub fn from_spec(spec: &EnvSpec) -> Self {
        Snare { n_sites: spec.size, horizon: spec.horizon, gamma: spec.gamma, high_risk_fraction: 0.2, clip: (0.01, 0.99) }
    }

    pub fn n_high_risk(&self) -> usize {
        (self.high_risk_fraction * self.n_sites as f64).round() as usize
    }

    pub fn high_risk_sites<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        let mut v = sample(rng, self.n_sites, self.n_high_risk()).into_vec();
        v.sort_unstable();
        v
    }

    pub fn generate_params<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let high = self.high_risk_sites(rng);
        let hi = Normal::new(0.8, 0.1).unwrap();
        let lo = Normal::new(0.1, 0.05).unwrap();
        (0..self.n_sites)
            .map(|s| {
                let p: f64 = if high.binary_search(&s).is_ok() { hi.sample(rng) } else { lo.sample(rng) };
                p.clamp(self.clip.0, self.clip.1)
            })
            .collect()
    }

    fn arrivals<R: Rng + ?Sized>(p: &[f64], present: &mut [bool], rng: &mut R, events: &mut Vec<LatentEvent>) {
        for (s, occupied) in present.iter_mut().enumerate() {
            if !*occupied {
                let outcome = rng.gen::<f64>() < p[s];
                events.push(LatentEvent::Bernoulli { entity: s, param: s, outcome });
                *occupied = outcome;
            }
        }
    }
}

/// Belief after visiting `action` and observing whether a snare was found.
pub fn belief_step_snare(b: &[f64], p: &[f64], action: usize, found: bool) -> Result<Vec<f64>, EnvError> {
    if action >= b.len() {
        return Err(EnvError::ActionOutOfRange { action, n: b.len() });
    }
    Ok(b.iter()
        .zip(p)
        .enumerate()
        .map(|(s, (&bs, &ps))| {
            let post = if s != action {
                bs
            } else if found {
                0.0
            } else {
                let miss = 1.0 - REMOVAL_SUCCESS;
                let den = miss * bs + (1.0 - bs);
                if den > 0.0 {
                    miss * bs / den
                } else {
                    0.0
                }
            };
            (post + (1.0 - post) * ps).clamp(0.0, 1.0)
        })
        .collect())
}

impl Simulator for Snare {
    type Hidden = Vec<bool>;

    fn n_actions(&self) -> usize {
        self.n_sites
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn gamma(&self) -> f64 {
        self.gamma
    }

    fn reset<R: Rng + ?Sized>(&self, theta: &[f64], rng: &mut R) -> (Vec<bool>, State, Vec<LatentEvent>) {
        let mut present = vec![false; self.n_sites];
        let mut events = Vec::with_capacity(self.n_sites);
        Self::arrivals(theta, &mut present, rng, &mut events);
        (present, State::Belief(theta.to_vec()), events)
    }

    fn step<R: Rng + ?Sized>(
        &self,
        theta: &[f64],
        present: &mut Vec<bool>,
        state: &State,
        action: usize,
        rng: &mut R,
    ) -> Result<Transition, EnvError> {
        if action >= self.n_sites {
            return Err(EnvError::ActionOutOfRange { action, n: self.n_sites });
        }
        let mut events = Vec::with_capacity(self.n_sites + 1);
        let mut found = false;
        if present[action] {
            found = rng.gen::<f64>() < REMOVAL_SUCCESS;
            let prob = if found { REMOVAL_SUCCESS } else { 1.0 - REMOVAL_SUCCESS };
            events.push(LatentEvent::Fixed { entity: action, prob });
            if found {
                present[action] = false;
            }
        }
        Self::arrivals(theta, present, rng, &mut events);
        let belief = belief_step_snare(state.belief(), theta, action, found)?;
        Ok(Transition {
            reward: if found { 1.0 } else { -1.0 },
            next_state: State::Belief(belief),
            latents: events,
            reward_param: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{simulate, UniformPolicy};
    use crate::mdp::Domain;
    use crate::seed;
    use proptest::prelude::*;
    use rand::Rng;

    fn snare() -> Snare {
        Snare::from_spec(&EnvSpec::default_for(Domain::Snare))
    }

    #[test]
    fn belief_examples() {
        let b = belief_step_snare(&[0.0, 0.5], &[0.3, 0.0], 1, false).unwrap();
        assert!((b[0] - 0.3).abs() < 1e-15);
        assert!((b[1] - 0.05 / 0.55).abs() < 1e-15);
        let b = belief_step_snare(&[1.0, 0.0], &[0.2, 0.0], 0, true).unwrap();
        assert!((b[0] - 0.2).abs() < 1e-15);
        assert!(belief_step_snare(&[0.1], &[0.1], 3, true).is_err());
    }

    #[test]
    fn exactly_four_high_risk_sites() {
        let s = snare();
        for seed_ in 0..50 {
            assert_eq!(s.high_risk_sites(&mut seed::rng(seed_)).len(), 4);
            let p = s.generate_params(&mut seed::rng(seed_));
            assert!(p.iter().all(|&v| (0.01..=0.99).contains(&v)));
        }
    }

    #[test]
    fn certain_arrival_site_is_always_occupied_when_empty() {
        // site 0 has p = 1: after every arrival phase it must hold a snare
        let s = Snare { n_sites: 3, ..snare() };
        let theta = [1.0, 0.2, 0.2];
        let mut rng = seed::rng(2);
        let (mut present, mut state, _) = s.reset(&theta, &mut rng);
        for _ in 0..1000 {
            assert!(present[0]);
            let a = rng.gen_range(0..3);
            let tr = s.step(&theta, &mut present, &state, a, &mut rng).unwrap();
            state = tr.next_state;
        }
    }

    proptest! {
        #[test]
        fn beliefs_stay_in_unit_interval(
            b0 in proptest::collection::vec(0.0f64..=1.0, 5),
            p in proptest::collection::vec(0.0f64..=1.0, 5),
            moves in proptest::collection::vec((0usize..5, any::<bool>()), 1..40),
        ) {
            let mut b = b0;
            for (a, found) in moves {
                b = belief_step_snare(&b, &p, a, found).unwrap();
                prop_assert!(b.iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }

        #[test]
        fn rewards_and_latent_likelihood(seed_ in 0u64..200) {
            let s = snare();
            let theta = s.generate_params(&mut seed::rng(seed_));
            let trajs = simulate(&s, &theta, &UniformPolicy(20), 2, seed_, true).unwrap();
            for t in &trajs {
                prop_assert_eq!(t.len(), 20);
                prop_assert!(t.steps.iter().all(|st| st.reward == 1.0 || st.reward == -1.0));
                let direct: f64 = t.latents().map(|e| match *e {
                    LatentEvent::Bernoulli { param, outcome, .. } => if outcome { theta[param].ln() } else { (1.0 - theta[param]).ln() },
                    LatentEvent::Fixed { prob, .. } => prob.ln(),
                    LatentEvent::Categorical { .. } => f64::NAN,
                }).sum();
                prop_assert!((direct - t.latent_log_prob(&theta)).abs() < 1e-9);
            }
            let again = simulate(&s, &theta, &UniformPolicy(20), 2, seed_, true).unwrap();
            prop_assert_eq!(trajs, again);
        }
    }
}
